//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.
//!
//! `ZOLE_ACCEPTANCE=1,3,6` restricts the run to the listed criteria.

use std::io::Write;
use std::time::Instant;

use zole::adapt::{adapt, pretrain, validate, zoom_target, AdaptConfig, AdaptOutcome};
use zole::datagen::{apply_degradation, generate_scene, DomainDegradation, SceneSpec};
use zole::eval::{epe, psnr, ssim, three_pixel_error, warp_right_to_left, ValidityMask};
use zole::graph::{build_graph, regularizer_grad, regularizer_value, smooth_with_graph, ExemplarSet, PatchGraph};
use zole::imgio::{read_pfm_raw, read_pgm, read_ppm, write_pfm_raw, write_pgm, write_ppm, Pfm, PfmHeader};
use zole::loss::{build_patch_graphs, composite_loss, graph_loss, l1_loss, GraphTerm, LossWeights};
use zole::model::{
    read_checkpoint, write_checkpoint, Layout, ModelParams, ParamGrad, StereoModel, TensorSpec, ToyModel,
};
use zole::{DisparityMap, Field, Image, Origin, PatchGrid, Rng, StereoPair};

type Check = Result<String, String>;
type Criterion = (usize, &'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn random_vec(rng: &mut Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(lo, hi)).collect()
}

fn random_field(rng: &mut Rng, h: usize, w: usize, lo: f64, hi: f64) -> Field {
    Field::from_fn(h, w, |_, _| rng.uniform(lo, hi))
}

fn random_image(rng: &mut Rng, h: usize, w: usize, c: usize) -> Image {
    Image::from_fn(h, w, c, |_, _, _| rng.uniform(0.0, 255.0)).unwrap()
}

// ---------------------------------------------------------------------------
// 1. graph engine

/// Edge weights rebuilt from the exemplars, as a dense `m × m` matrix.
fn oracle_weights(patches: &[Vec<f64>], p: usize) -> Vec<f64> {
    let m = patches[0].len();
    let d2 = |i: usize, j: usize| {
        let mut f = 0.0;
        for patch in patches {
            let d = patch[i] - patch[j];
            f += d * d;
        }
        let dy = (i / p) as f64 - (j / p) as f64;
        let dx = (i % p) as f64 - (j % p) as f64;
        f + 0.2 * (dy * dy + dx * dx)
    };
    let k = 4.min(m - 1);
    let mut eps2 = 0.0f64;
    for i in 0..m {
        let mut row: Vec<f64> = (0..m).filter(|&j| j != i).map(|j| d2(i, j)).collect();
        row.sort_by(f64::total_cmp);
        eps2 = eps2.max(row[k - 1]);
    }
    let mut w = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            if i != j && d2(i, j) <= eps2 {
                w[i * m + j] = (-d2(i, j)).exp();
            }
        }
    }
    w
}

fn criterion_graph() -> Check {
    let mut rng = Rng::new(101);
    let sides = [2, 3, 5, 20];
    for n in 0..200 {
        let p = sides[n % sides.len()];
        let m = p * p;
        let patches: Vec<Vec<f64>> = (0..3).map(|_| random_vec(&mut rng, m, 0.0, 2.0)).collect();
        let g = build_graph(&ExemplarSet::new(patches.clone()).unwrap(), 0.2, p).map_err(|e| e.to_string())?;
        let lap = g.dense_laplacian();
        for i in 0..m {
            for j in 0..m {
                ensure(lap[i * m + j] == lap[j * m + i], || {
                    format!("patch {n}: L not symmetric at ({i},{j})")
                })?;
            }
            let row: f64 = lap[i * m..(i + 1) * m].iter().sum();
            ensure(row.abs() <= 1e-12, || format!("patch {n}: row {i} sums to {row:e}"))?;
        }
        for _ in 0..100 {
            let x = random_vec(&mut rng, m, -1.0, 1.0);
            let lx: Vec<f64> = (0..m).map(|i| dot(&lap[i * m..(i + 1) * m], &x)).collect();
            let q = dot(&x, &lx);
            ensure(q >= -1e-12, || format!("patch {n}: xᵀLx = {q:e}"))?;
        }
        let min_deg = *g.neighbour_counts().iter().min().unwrap();
        ensure(min_deg >= 4.min(m - 1), || format!("patch {n}: min degree {min_deg}"))?;

        let w = oracle_weights(&patches, p);
        let s = random_vec(&mut rng, m, 0.0, 10.0);
        let mut oracle = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                oracle += w[i * m + j] * (s[i] - s[j]).powi(2);
            }
        }
        let value = regularizer_value(&g, &s).map_err(|e| e.to_string())?;
        ensure(rel_err(value, oracle) <= 1e-9, || {
            format!("patch {n}: regularizer {value} vs oracle {oracle}")
        })?;
    }
    Ok("200 patches".into())
}

// ---------------------------------------------------------------------------
// 2. gradients

/// Fourth-order central difference.
fn fd(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (8.0 * (f(h) - f(-h)) - (f(2.0 * h) - f(-2.0 * h))) / (12.0 * h)
}

fn fd_check(what: &str, analytic: f64, numeric: f64, worst: &mut f64) -> Result<(), String> {
    let e = rel_err(analytic, numeric);
    *worst = worst.max(e);
    ensure(e < 1e-5, || {
        format!("{what}: analytic {analytic} vs numeric {numeric} (rel {e:e})")
    })
}

fn shifted(f: &Field, t: f64, dir: &Field) -> Field {
    let mut out = f.clone();
    out.add_scaled(t, dir).unwrap();
    out
}

fn criterion_gradients() -> Check {
    let (h, w, dmax) = (16, 16, 4);
    let instances = 20;
    let mut rng = Rng::new(202);
    let mut worst = 0.0f64;
    let weights = LossWeights {
        patch_side: 8,
        ..LossWeights::default()
    };
    let grid = PatchGrid::for_map(h, w, 8).unwrap();
    let model = ToyModel::new(3, dmax);
    for n in 0..instances {
        let gray = random_field(&mut rng, h, w, 0.0, 255.0);
        let curr = random_field(&mut rng, h, w, 0.0, dmax as f64);
        let fine = random_field(&mut rng, h, w, 0.0, dmax as f64);
        let pred = random_field(&mut rng, h, w, 0.5, dmax as f64);
        let target = random_field(&mut rng, h, w, 0.0, dmax as f64);
        let dir = random_field(&mut rng, h, w, -1.0, 1.0);
        let graphs = build_patch_graphs(&gray, &curr, &fine, &grid, &weights).map_err(|e| e.to_string())?;

        // regularizer on a single 16×16 patch
        let g: &PatchGraph = &build_graph(
            &ExemplarSet::new(vec![gray.data().to_vec(), curr.data().to_vec(), fine.data().to_vec()]).unwrap(),
            0.2,
            w,
        )
        .unwrap();
        let grad = regularizer_grad(g, pred.data()).unwrap();
        let numeric = fd(|t| regularizer_value(g, shifted(&pred, t, &dir).data()).unwrap(), 1e-4);
        fd_check(
            &format!("regularizer_grad #{n}"),
            dot(&grad, dir.data()),
            numeric,
            &mut worst,
        )?;

        let (_, cot) = graph_loss(&pred, &graphs, &grid).unwrap();
        let numeric = fd(
            |t| graph_loss(&shifted(&pred, t, &dir), &graphs, &grid).unwrap().0,
            1e-4,
        );
        fd_check(
            &format!("graph_loss #{n}"),
            dot(cot.data(), dir.data()),
            numeric,
            &mut worst,
        )?;

        // L1 is piecewise linear: step well inside the current sign pattern
        let gap = pred
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b).abs())
            .fold(f64::INFINITY, f64::min);
        let h_l1 = (0.25 * gap).min(1e-3);
        let (_, cot) = l1_loss(&pred, &target).unwrap();
        let numeric = fd(|t| l1_loss(&shifted(&pred, t, &dir), &target).unwrap().0, h_l1);
        fd_check(
            &format!("l1_loss #{n}"),
            dot(cot.data(), dir.data()),
            numeric,
            &mut worst,
        )?;

        let tgt = DisparityMap::from_field(target.clone()).unwrap();
        let term = GraphTerm { graphs: &graphs, grid };
        let total = |p: &Field, origin: Origin| {
            let p = DisparityMap::from_field(p.clone()).unwrap();
            let g = (origin == Origin::Domain).then_some(term);
            composite_loss(&p, origin, Some(&tgt), g, &weights).unwrap()
        };
        for origin in [Origin::Domain, Origin::Synthetic] {
            let (_, cot) = total(&pred, origin);
            let numeric = fd(|t| total(&shifted(&pred, t, &dir), origin).0.total, h_l1);
            fd_check(
                &format!("composite {origin:?} #{n}"),
                dot(cot.data(), dir.data()),
                numeric,
                &mut worst,
            )?;
        }

        let mut theta = model.init_params(&mut rng);
        theta.tensor_mut("log_beta").unwrap()[0] = rng.uniform(-0.5, 1.0);
        let left = random_image(&mut rng, h, w, 3);
        let right = random_image(&mut rng, h, w, 3);
        let pgrad = model.backward(&left, &right, &theta, &dir).unwrap();
        let pdir = random_vec(&mut rng, theta.values().len(), -1.0, 1.0);
        let numeric = fd(
            |t| {
                let mut p = theta.clone();
                for (v, d) in p.values_mut().iter_mut().zip(&pdir) {
                    *v += t * d;
                }
                dot(model.forward(&left, &right, &p).unwrap().data(), dir.data())
            },
            1e-5,
        );
        fd_check(&format!("toy backward #{n}"), pgrad.dot(&pdir), numeric, &mut worst)?;
    }
    Ok(format!(
        "{instances} instances x 6 gradients, worst rel err {worst:.1e}"
    ))
}

// ---------------------------------------------------------------------------
// 3. selective regularization

fn step(p: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..p * p).map(|i| if i % p < p / 2 { lo } else { hi }).collect()
}

fn contrast(s: &[f64], p: usize) -> f64 {
    let half = (p * p / 2) as f64;
    let (mut a, mut b) = (0.0, 0.0);
    for (i, v) in s.iter().enumerate() {
        if i % p < p / 2 {
            a += v;
        } else {
            b += v;
        }
    }
    (b - a) / half
}

fn criterion_selective() -> Check {
    let p = 20;
    let w = LossWeights::default();
    let scale = |v: Vec<f64>, k: f64| v.into_iter().map(|x| x * k).collect::<Vec<_>>();

    let d = step(p, 4.0, 10.0);
    let ex = ExemplarSet::new(vec![
        scale(step(p, 60.0, 180.0), w.w_left),
        scale(vec![7.0; p * p], w.w_curr),
        scale(d.clone(), w.w_fine),
    ])
    .unwrap();
    let g = build_graph(&ex, w.alpha, p).unwrap();
    let s = smooth_with_graph(&g, &d, 1.0, 1e-12, 10_000).unwrap();
    let retention = contrast(&s, p) / contrast(&d, p);
    ensure(retention >= 0.8, || format!("edge retention {retention:.3}"))?;

    let ex = ExemplarSet::new(vec![
        scale(vec![120.0; p * p], w.w_left),
        scale(step(p, 4.0, 10.0), w.w_curr),
        scale(vec![7.0; p * p], w.w_fine),
    ])
    .unwrap();
    let g = build_graph(&ex, w.alpha, p).unwrap();
    let flat = vec![7.0; p * p];
    let s = smooth_with_graph(&g, &flat, 1.0, 1e-12, 10_000).unwrap();
    let dev = s.iter().map(|v| (v - 7.0).abs()).fold(0.0, f64::max) / 6.0;
    ensure(dev <= 0.05, || {
        format!("spurious pattern deviation {dev:.3} of step height")
    })?;
    Ok(format!(
        "retention {:.1}%, spurious deviation {:.2e}",
        100.0 * retention,
        dev
    ))
}

// ---------------------------------------------------------------------------
// 4. desk-scale experiment

const SIZE: usize = 160;

fn scene(seed: u64) -> zole::datagen::Scene {
    generate_scene(&SceneSpec {
        height: SIZE,
        width: SIZE,
        seed,
        ..SceneSpec::default()
    })
    .unwrap()
}

struct DomainSet {
    pairs: Vec<StereoPair>,
    truth: Vec<(DisparityMap, ValidityMask)>,
}

fn domain_set(base: u64, count: usize) -> DomainSet {
    let mut rng = Rng::new(base ^ 0xD0);
    let (pairs, truth) = (0..count)
        .map(|i| {
            let s = scene(base + i as u64);
            let pair = apply_degradation(&s.pair, &DomainDegradation::default(), &mut rng).unwrap();
            (pair, (s.pair.ground_truth().unwrap().clone(), s.visible()))
        })
        .unzip();
    DomainSet { pairs, truth }
}

fn test_epe(model: &ToyModel, theta: &ModelParams, set: &DomainSet) -> f64 {
    set.pairs
        .iter()
        .zip(&set.truth)
        .map(|(p, (gt, mask))| epe(&model.forward(p.left(), p.right(), theta).unwrap(), gt, mask).unwrap())
        .sum::<f64>()
        / set.pairs.len() as f64
}

struct Experiment {
    pretrained: ModelParams,
    zole: AdaptOutcome,
}

fn quiet(_: &zole::adapt::LogRecord) -> zole::Result<()> {
    Ok(())
}

fn pretrain_config() -> AdaptConfig {
    AdaptConfig {
        lr: 0.1,
        k_max: 1000,
        crop_size: 80,
        seed: 11,
        ..AdaptConfig::default()
    }
}

fn adapt_config(lambda: f64) -> AdaptConfig {
    AdaptConfig {
        lr: 0.01,
        k_max: 1000,
        validate_every: 100,
        crop_size: 80,
        seed: 12,
        weights: LossWeights {
            lambda_agg: lambda,
            ..LossWeights::default()
        },
        ..AdaptConfig::default()
    }
}

fn run_experiment(model: &ToyModel, synth: &[StereoPair], domain: &DomainSet, val: &DomainSet) -> Experiment {
    let theta0 = model.init_params(&mut Rng::new(1));
    let pretrained = pretrain(model, &theta0, synth, &pretrain_config(), &mut quiet).unwrap();
    let zole = adapt(
        model,
        &pretrained,
        &domain.pairs,
        synth,
        &val.pairs,
        &adapt_config(1.5),
        &mut quiet,
    )
    .unwrap();
    Experiment { pretrained, zole }
}

fn criterion_experiment() -> Check {
    let model = ToyModel::new(3, 16);
    let synth: Vec<StereoPair> = (0..40).map(|i| scene(1000 + i).pair).collect();
    let domain = domain_set(2000, 40);
    let val = domain_set(3000, 10);
    let test = domain_set(4000, 10);

    let run = run_experiment(&model, &synth, &domain, &val);
    let base_epe = test_epe(&model, &run.pretrained, &test);
    let base_psnr = validate(&model, &run.pretrained, &val.pairs).unwrap();
    let zole_epe = test_epe(&model, &run.zole.best_theta, &test);
    let zole_psnr = run.zole.best_psnr.unwrap();

    let plain = adapt(
        &model,
        &run.pretrained,
        &domain.pairs,
        &synth,
        &val.pairs,
        &adapt_config(0.0),
        &mut quiet,
    )
    .unwrap();
    let plain_epe = test_epe(&model, &plain.best_theta, &test);
    let plain_psnr = plain.best_psnr.unwrap();

    let pool = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
    let rerun = pool.install(|| run_experiment(&model, &synth, &domain, &val));

    let summary = format!(
        "EPE unadapted {base_epe:.4} / ZOLE {zole_epe:.4} / ZOLE-S {plain_epe:.4}; \
         val PSNR unadapted {base_psnr:.3} / ZOLE {zole_psnr:.3} / ZOLE-S {plain_psnr:.3}"
    );
    ensure(zole_epe <= 0.9 * base_epe, || {
        format!("(a) EPE gain below 10%: {summary}")
    })?;
    ensure(zole_psnr >= plain_psnr - 0.1, || {
        format!("(b) PSNR below ZOLE-S: {summary}")
    })?;
    ensure(zole_epe <= plain_epe, || format!("(b) EPE above ZOLE-S: {summary}"))?;
    let same = rerun.pretrained.bit_eq(&run.pretrained)
        && rerun.zole.best_theta.bit_eq(&run.zole.best_theta)
        && rerun.zole.final_theta.bit_eq(&run.zole.final_theta)
        && rerun
            .zole
            .validations
            .iter()
            .zip(&run.zole.validations)
            .all(|(a, b)| a.0 == b.0 && a.1.to_bits() == b.1.to_bits());
    ensure(same, || format!("(c) rerun differs: {summary}"))?;
    Ok(format!(
        "{summary}; EPE gain {:.1}%; rerun bit-identical",
        100.0 * (1.0 - zole_epe / base_epe)
    ))
}

// ---------------------------------------------------------------------------
// 5. zoom pipeline

/// Predicts `shift · W / base_width`: the exact answer for a pair whose right
/// view is the left view translated by `shift` pixels at width `base_width`.
struct ShiftOracle {
    layout: Layout,
    base_width: f64,
    shift: f64,
    constant: bool,
}

impl ShiftOracle {
    fn new(base_width: usize, shift: f64, constant: bool) -> Self {
        Self {
            layout: Layout {
                model: "shift-oracle".into(),
                in_channels: 3,
                max_disparity: 64,
                tensors: vec![TensorSpec::new("unused", &[1])],
            },
            base_width: base_width as f64,
            shift,
            constant,
        }
    }
}

impl StereoModel for ShiftOracle {
    fn max_disparity(&self) -> usize {
        64
    }
    fn layout(&self) -> &Layout {
        &self.layout
    }
    fn init_params(&self, _: &mut Rng) -> ModelParams {
        ModelParams::new(self.layout.clone(), vec![0.0]).unwrap()
    }
    fn forward(&self, left: &Image, _: &Image, _: &ModelParams) -> zole::Result<DisparityMap> {
        let k = if self.constant {
            1.0
        } else {
            left.width() as f64 / self.base_width
        };
        DisparityMap::filled(left.height(), left.width(), self.shift * k)
    }
    fn backward(&self, _: &Image, _: &Image, p: &ModelParams, _: &Field) -> zole::Result<ParamGrad> {
        Ok(ParamGrad::zeros(p.layout()))
    }
}

fn criterion_zoom() -> Check {
    let mut rng = Rng::new(505);
    let (h, w, shift) = (40, 48, 3);
    let wide = random_image(&mut rng, h, w + shift, 3);
    let left = wide.crop(0, 0, h, w).unwrap();
    let right = wide.crop(0, shift, h, w).unwrap();
    let mut worst = 0.0f64;
    for r in [1.25, 1.5, 2.0, 3.0] {
        for c in [0.0, 1.0, 6.0, 12.5] {
            let m = ShiftOracle::new(w, c, true);
            let t = zoom_target(&m, &m.init_params(&mut rng), &left, &right, r).unwrap();
            ensure((t.height(), t.width()) == (h, w), || "zoom target changed size".into())?;
            ensure(t.data().iter().all(|&v| v == c / r), || {
                format!("constant {c} at r={r} is not c/r")
            })?;
        }
        let m = ShiftOracle::new(w, shift as f64, false);
        let theta = m.init_params(&mut rng);
        let direct = m.forward(&left, &right, &theta).unwrap();
        let t = zoom_target(&m, &theta, &left, &right, r).unwrap();
        for (a, b) in t.data().iter().zip(direct.data()) {
            worst = worst.max((a - b).abs());
        }
        ensure(worst < 1e-6, || {
            format!("scale-equivariant mock off by {worst:e} at r={r}")
        })?;
    }
    Ok(format!("c/r exact; equivariant mock max deviation {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// 6. metrics and warping

fn criterion_metrics() -> Check {
    let mut rng = Rng::new(606);
    for n in 0..50 {
        let (h, w) = (1 + rng.index(30), 1 + rng.index(30));
        let gt = random_field(&mut rng, h, w, 6.0, 20.0);
        let pred = Field::from_fn(h, w, |y, x| gt.at(y, x) + rng.uniform(-6.0, 6.0));
        let mask = ValidityMask::from_fn(h, w, |_, _| rng.uniform(0.0, 1.0) < 0.8);
        if mask.count() == 0 {
            continue;
        }
        let (mut sum, mut bad, mut count) = (0.0, 0usize, 0usize);
        for y in 0..h {
            for x in 0..w {
                if mask.get(y, x) {
                    let e = (pred.at(y, x) - gt.at(y, x)).abs();
                    sum += e;
                    bad += (e > 3.0) as usize;
                    count += 1;
                }
            }
        }
        let (p, g) = (
            DisparityMap::from_field(pred).unwrap(),
            DisparityMap::from_field(gt).unwrap(),
        );
        let e = epe(&p, &g, &mask).unwrap();
        let t = three_pixel_error(&p, &g, &mask).unwrap();
        let oracle_t = 100.0 * bad as f64 / count as f64;
        ensure((e - sum / count as f64).abs() <= 1e-12, || {
            format!("EPE fixture {n}: {e} vs {}", sum / count as f64)
        })?;
        ensure((t - oracle_t).abs() <= 1e-12, || {
            format!("3ER fixture {n}: {t} vs {oracle_t}")
        })?;
    }

    let a = Image::from_fn(32, 40, 3, |_, _, _| rng.uniform(20.0, 200.0).round()).unwrap();
    let b = Image::new(32, 40, 3, a.data().iter().map(|v| v + 16.0).collect()).unwrap();
    let value = psnr(&a, &b, &ValidityMask::all(32, 40)).unwrap();
    ensure((value - 24.05).abs() <= 0.01, || {
        format!("PSNR for offset 16 is {value}")
    })?;

    let right = random_image(&mut rng, 24, 30, 3);
    let (warped, valid) = warp_right_to_left(&right, &DisparityMap::filled(24, 30, 0.0).unwrap()).unwrap();
    let identical = warped
        .data()
        .iter()
        .zip(right.data())
        .all(|(x, y)| x.to_bits() == y.to_bits());
    ensure(identical && valid.count() == 24 * 30, || {
        "zero-disparity warp is not the identity".into()
    })?;

    let img = random_image(&mut rng, 40, 40, 3);
    let s = ssim(&img, &img).unwrap();
    ensure((s - 1.0).abs() <= 1e-12, || format!("SSIM(a, a) = {s}"))?;
    Ok(format!("PSNR(offset 16) = {value:.4} dB"))
}

// ---------------------------------------------------------------------------
// 7. file formats

fn criterion_io() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = Rng::new(707);
    let model = ToyModel::new(3, 8);
    for n in 0..50 {
        let (h, w) = (1 + rng.index(24), 1 + rng.index(24));

        for scale in [-1.0, 1.0] {
            let pfm = Pfm {
                header: PfmHeader {
                    channels: 1,
                    width: w,
                    height: h,
                    scale,
                },
                data: (0..h * w)
                    .map(|_| f32::from_bits(rng.next_u64() as u32 & 0x7f7f_ffff))
                    .collect(),
            };
            let path = dir.path().join(format!("{n}_{scale}.pfm"));
            write_pfm_raw(&path, &pfm).map_err(|e| e.to_string())?;
            let back = read_pfm_raw(&path).map_err(|e| e.to_string())?;
            let exact =
                back.header == pfm.header && back.data.iter().zip(&pfm.data).all(|(a, b)| a.to_bits() == b.to_bits());
            ensure(exact && back.data.len() == pfm.data.len(), || {
                format!("PFM fixture {n} (scale {scale})")
            })?;
        }

        for channels in [1, 3] {
            let img = Image::from_fn(h, w, channels, |_, _, _| rng.index(256) as f64).unwrap();
            let path = dir.path().join(format!("{n}_{channels}.pnm"));
            let back = if channels == 1 {
                write_pgm(&path, &img).and_then(|_| read_pgm(&path))
            } else {
                write_ppm(&path, &img).and_then(|_| read_ppm(&path))
            }
            .map_err(|e| e.to_string())?;
            ensure(back == img, || format!("PNM fixture {n} ({channels} channels)"))?;
        }

        let mut theta = model.init_params(&mut rng);
        for v in theta.values_mut() {
            *v = f64::from_bits(rng.next_u64() & 0x7fef_ffff_ffff_ffff) * if rng.index(2) == 0 { 1.0 } else { -1.0 };
        }
        let path = dir.path().join(format!("{n}.ckpt"));
        write_checkpoint(&path, &theta).map_err(|e| e.to_string())?;
        let back = read_checkpoint(&path).map_err(|e| e.to_string())?;
        ensure(back.bit_eq(&theta), || format!("checkpoint fixture {n}"))?;
    }
    Ok("50 fixtures".into())
}

fn main() {
    let criteria: [Criterion; 7] = [
        (1, "graph engine oracle suite", criterion_graph),
        (2, "gradient suite", criterion_gradients),
        (3, "selective regularization", criterion_selective),
        (4, "desk-scale adaptation experiment", criterion_experiment),
        (5, "zoom pipeline contract", criterion_zoom),
        (6, "metric and warp oracles", criterion_metrics),
        (7, "I/O bit-exactness", criterion_io),
    ];
    let only: Option<Vec<usize>> = std::env::var("ZOLE_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut failed = 0;
    for (id, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  criterion {id}: {name} ({secs:.1}s) {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  criterion {id}: {name} ({secs:.1}s) {detail}");
            }
        }
        std::io::stdout().flush().ok();
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
