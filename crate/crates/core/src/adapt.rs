//! Zoom-target generation and the iterative self-adaptation loop.
//!
//! Each iteration draws `n` examples from a shuffled list of domain and
//! synthetic pairs. Domain examples are trained towards the model's own
//! zoomed-in prediction, regularized by per-patch exemplar graphs; synthetic
//! examples are trained against their ground truth. Validation runs every
//! `validate_every` iterations and the best-scoring parameters are kept.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{augment_synthetic, Augmentation};
use crate::eval::{psnr, warp_right_to_left};
use crate::imgio::{resize_disparity_to, resize_image};
use crate::loss::{build_patch_graphs, composite_loss, ExampleLossReport, GraphTerm, LossWeights};
use crate::model::{sgd_step, ModelParams, ParamGrad, StereoModel};
use crate::patch::PatchGrid;
use crate::rng::{shuffle, Rng};
use crate::types::{DisparityMap, Image, Origin, StereoPair};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptConfig {
    /// Zoom ratio for the fine targets.
    pub r: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub k_max: usize,
    pub validate_every: usize,
    pub seed: u64,
    /// Side of the random square training crops; a multiple of the patch side.
    pub crop_size: usize,
    /// Apply noise/brightness augmentation to synthetic examples.
    pub augment: bool,
    pub augmentation: Augmentation,
    pub weights: LossWeights,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            r: 1.5,
            batch_size: 6,
            lr: 5e-5,
            k_max: 10_000,
            validate_every: 500,
            seed: 0,
            crop_size: 160,
            augment: true,
            augmentation: Augmentation::default(),
            weights: LossWeights::default(),
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 1.0 && self.r.is_finite()) {
            return Err(Error::Config(format!("r must be > 1, got {}", self.r)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.validate_every == 0 {
            return Err(Error::Config("validate_every must be >= 1".into()));
        }
        self.weights.validate()?;
        self.augmentation.validate()?;
        let p = self.weights.patch_side;
        if self.crop_size == 0 || !self.crop_size.is_multiple_of(p) {
            return Err(Error::Config(format!(
                "crop_size {} is not a positive multiple of patch_side {p}",
                self.crop_size
            )));
        }
        Ok(())
    }
}

/// `(1/r) · ↓(S(↑_r(P); Θ))`, resampled back to the pair's own size.
///
/// `r = 1` is accepted and reduces to a plain forward pass.
pub fn zoom_target<M: StereoModel + ?Sized>(
    model: &M,
    params: &ModelParams,
    left: &Image,
    right: &Image,
    r: f64,
) -> Result<DisparityMap> {
    if !(r >= 1.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!("zoom ratio must be >= 1, got {r}")));
    }
    if r == 1.0 {
        return model.forward(left, right, params);
    }
    let pred = model.forward(&resize_image(left, r)?, &resize_image(right, r)?, params)?;
    let back = resize_disparity_to(&pred, left.height(), left.width())?;
    let (h, w) = (back.height(), back.width());
    DisparityMap::new(h, w, back.into_field().into_data().into_iter().map(|v| v / r).collect())
}

/// PSNR of the right view warped by the prediction against the left view.
pub fn pair_psnr<M: StereoModel + ?Sized>(model: &M, params: &ModelParams, pair: &StereoPair) -> Result<f64> {
    let pred = model.forward(pair.left(), pair.right(), params)?;
    let (synth, valid) = warp_right_to_left(pair.right(), &pred)?;
    psnr(&synth, pair.left(), &valid)
}

/// Mean warp PSNR over a validation set.
pub fn validate<M: StereoModel + ?Sized>(model: &M, params: &ModelParams, pairs: &[StereoPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("validation set is empty".into()));
    }
    let scores: Vec<f64> = pairs
        .par_iter()
        .map(|p| pair_psnr(model, params, p))
        .collect::<Result<_>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Loop state: current and best parameters plus the draw list.
#[derive(Debug, Clone)]
pub struct AdaptState {
    pub k: usize,
    pub theta: ModelParams,
    pub best_theta: ModelParams,
    /// `None` until the first validation.
    pub best_psnr: Option<f64>,
    order: Vec<usize>,
    cursor: usize,
}

impl AdaptState {
    fn new(theta: ModelParams, count: usize, rng: &mut Rng) -> Self {
        Self {
            k: 0,
            best_theta: theta.clone(),
            theta,
            best_psnr: None,
            order: shuffle((0..count).collect(), rng),
            cursor: 0,
        }
    }

    fn draw(&mut self, rng: &mut Rng) -> usize {
        if self.cursor == self.order.len() {
            self.order = shuffle((0..self.order.len()).collect(), rng);
            self.cursor = 0;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }

    fn observe(&mut self, psnr: f64) {
        if self.best_psnr.is_none_or(|b| psnr > b) {
            self.best_psnr = Some(psnr);
            self.best_theta = self.theta.clone();
        }
    }
}

/// One training-log record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogRecord {
    /// Batch means after step `iter` (1-based). Absent terms are `None`.
    Iteration {
        iter: usize,
        l1_dom: Option<f64>,
        l1_syn: Option<f64>,
        reg: Option<f64>,
        total: f64,
    },
    Validation {
        iter: usize,
        psnr: f64,
    },
}

impl LogRecord {
    pub fn to_json(&self) -> serde_json::Value {
        match *self {
            LogRecord::Iteration {
                iter,
                l1_dom,
                l1_syn,
                reg,
                total,
            } => serde_json::json!({
                "iter": iter, "l1_dom": l1_dom, "l1_syn": l1_syn, "reg": reg, "total": total
            }),
            LogRecord::Validation { iter, psnr } => serde_json::json!({"event": "val", "iter": iter, "psnr": psnr}),
        }
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct AdaptOutcome {
    pub best_theta: ModelParams,
    pub best_psnr: Option<f64>,
    pub final_theta: ModelParams,
    /// `(iteration, psnr)` for every validation performed.
    pub validations: Vec<(usize, f64)>,
}

struct Draw {
    pair: StereoPair,
    rng: Rng,
}

fn crop_draw(pair: &StereoPair, crop: usize, rng: &mut Rng) -> Result<StereoPair> {
    let (h, w) = (pair.height(), pair.width());
    if h < crop || w < crop {
        return Err(Error::Dimension(format!(
            "pair {h}x{w} is smaller than crop size {crop}"
        )));
    }
    let y0 = rng.index(h - crop + 1);
    let x0 = rng.index(w - crop + 1);
    pair.crop(y0, x0, crop, crop)
}

fn example_step<M: StereoModel + ?Sized>(
    model: &M,
    theta: &ModelParams,
    draw: Draw,
    config: &AdaptConfig,
) -> Result<(ExampleLossReport, ParamGrad)> {
    let Draw { pair, mut rng } = draw;
    let weights = &config.weights;
    let mut report = None;
    let grad = match pair.origin() {
        Origin::Synthetic => {
            let pair = if config.augment {
                augment_synthetic(&pair, &config.augmentation, &mut rng)?
            } else {
                pair
            };
            let gt = pair.ground_truth().cloned();
            let (_, grad) = model.forward_backward(pair.left(), pair.right(), theta, &mut |pred| {
                let (rep, cot) = composite_loss(pred, Origin::Synthetic, gt.as_ref(), None, weights)?;
                report = Some(rep);
                Ok(cot)
            })?;
            grad
        }
        Origin::Domain => {
            let fine = zoom_target(model, theta, pair.left(), pair.right(), config.r)?;
            let gray = pair.left().to_gray();
            let grid = PatchGrid::for_map(pair.height(), pair.width(), weights.patch_side)?;
            let (_, grad) = model.forward_backward(pair.left(), pair.right(), theta, &mut |pred| {
                let graphs = if weights.lambda_agg > 0.0 {
                    Some(build_patch_graphs(&gray, pred, &fine, &grid, weights)?)
                } else {
                    None
                };
                let term = graphs.as_deref().map(|g| GraphTerm { graphs: g, grid });
                let (rep, cot) = composite_loss(pred, Origin::Domain, Some(&fine), term, weights)?;
                report = Some(rep);
                Ok(cot)
            })?;
            grad
        }
    };
    let report = report.ok_or_else(|| Error::InvalidArgument("model did not evaluate the loss".into()))?;
    Ok((report, grad))
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn validation_step<M: StereoModel + ?Sized>(
    model: &M,
    validation: Option<&[StereoPair]>,
    state: &mut AdaptState,
    history: &mut Vec<(usize, f64)>,
    iter: usize,
    log: &mut dyn FnMut(&LogRecord) -> Result<()>,
) -> Result<()> {
    if let Some(val) = validation {
        let v = validate(model, &state.theta, val)?;
        state.observe(v);
        history.push((iter, v));
        log(&LogRecord::Validation { iter, psnr: v })?;
    }
    Ok(())
}

/// The shared loop behind [`adapt`] and [`pretrain`].
pub fn train<M: StereoModel + ?Sized>(
    model: &M,
    theta0: &ModelParams,
    domain: &[StereoPair],
    synthetic: &[StereoPair],
    validation: Option<&[StereoPair]>,
    config: &AdaptConfig,
    log: &mut dyn FnMut(&LogRecord) -> Result<()>,
) -> Result<AdaptOutcome> {
    config.validate()?;
    if domain.is_empty() && synthetic.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if let Some(p) = domain.iter().position(|p| p.origin() != Origin::Domain) {
        return Err(Error::InvalidArgument(format!("domain pair {p} carries ground truth")));
    }
    if let Some(p) = synthetic.iter().position(|p| p.ground_truth().is_none()) {
        return Err(Error::InvalidArgument(format!(
            "synthetic pair {p} has no ground truth"
        )));
    }
    if validation.is_some_and(|v| v.is_empty()) {
        return Err(Error::InvalidArgument("validation set is empty".into()));
    }

    let mut rng = Rng::new(config.seed);
    let mut state = AdaptState::new(theta0.clone(), domain.len() + synthetic.len(), &mut rng);
    let mut validations = Vec::new();
    validation_step(model, validation, &mut state, &mut validations, 0, log)?;

    let n = config.batch_size;
    for k in 0..config.k_max {
        let draws: Vec<Draw> = (0..n)
            .map(|_| {
                let idx = state.draw(&mut rng);
                let src = if idx < domain.len() {
                    &domain[idx]
                } else {
                    &synthetic[idx - domain.len()]
                };
                Ok(Draw {
                    pair: crop_draw(src, config.crop_size, &mut rng)?,
                    rng: rng.fork(),
                })
            })
            .collect::<Result<_>>()?;
        let results: Vec<(ExampleLossReport, ParamGrad)> = draws
            .into_par_iter()
            .map(|d| example_step(model, &state.theta, d, config))
            .collect::<Result<_>>()?;

        let reports: Vec<&ExampleLossReport> = results.iter().map(|(r, _)| r).collect();
        let total = reports.iter().map(|r| r.total).sum::<f64>() / n as f64;
        if !total.is_finite() {
            return Err(Error::NonFinite(format!("loss at iteration {k}")));
        }
        let mut grad = ParamGrad::zeros(state.theta.layout());
        for (_, g) in &results {
            grad.add_scaled(1.0 / n as f64, g)?;
        }
        state.theta = sgd_step(&state.theta, &grad, config.lr)
            .map_err(|e| Error::NonFinite(format!("parameter update at iteration {k}: {e}")))?;
        state.k = k + 1;

        let dom = || reports.iter().filter(|r| r.origin == Origin::Domain);
        log(&LogRecord::Iteration {
            iter: k + 1,
            l1_dom: mean_of(dom().map(|r| r.l1)),
            l1_syn: mean_of(reports.iter().filter(|r| r.origin == Origin::Synthetic).map(|r| r.l1)),
            reg: mean_of(dom().map(|r| r.reg_mean)),
            total,
        })?;
        if (k + 1) % config.validate_every == 0 {
            validation_step(model, validation, &mut state, &mut validations, k + 1, log)?;
        }
    }

    let best_theta = if validation.is_some() {
        state.best_theta
    } else {
        state.theta.clone()
    };
    Ok(AdaptOutcome {
        best_theta,
        best_psnr: state.best_psnr,
        final_theta: state.theta,
        validations,
    })
}

/// Self-adaptation with validation-based model selection; returns `Θ^(bst)`.
pub fn adapt<M: StereoModel + ?Sized>(
    model: &M,
    theta0: &ModelParams,
    domain: &[StereoPair],
    synthetic: &[StereoPair],
    validation: &[StereoPair],
    config: &AdaptConfig,
    log: &mut dyn FnMut(&LogRecord) -> Result<()>,
) -> Result<AdaptOutcome> {
    if validation.is_empty() {
        return Err(Error::InvalidArgument("validation set is empty".into()));
    }
    train(model, theta0, domain, synthetic, Some(validation), config, log)
}

/// Supervised training on synthetic pairs only (no domain data, no regularizer).
pub fn pretrain<M: StereoModel + ?Sized>(
    model: &M,
    theta0: &ModelParams,
    synthetic: &[StereoPair],
    config: &AdaptConfig,
    log: &mut dyn FnMut(&LogRecord) -> Result<()>,
) -> Result<ModelParams> {
    if synthetic.is_empty() {
        return Err(Error::InvalidArgument("no synthetic pairs to train on".into()));
    }
    let mut config = config.clone();
    config.weights.lambda_agg = 0.0;
    Ok(train(model, theta0, &[], synthetic, None, &config, log)?.final_theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Layout, TensorSpec, ToyModel};
    use crate::types::Field;

    /// Returns `scale(W) · (a + b·u + c·v)` with normalized coordinates `u, v`,
    /// where `scale(W) = W / base_width`.
    struct LinearMock {
        layout: Layout,
        base_width: f64,
        coef: [f64; 3],
    }

    impl LinearMock {
        fn new(base_width: usize, coef: [f64; 3]) -> Self {
            Self {
                layout: Layout {
                    model: "linear-mock".into(),
                    in_channels: 3,
                    max_disparity: 64,
                    tensors: vec![TensorSpec::new("w", &[1])],
                },
                base_width: base_width as f64,
                coef,
            }
        }
    }

    impl StereoModel for LinearMock {
        fn max_disparity(&self) -> usize {
            64
        }
        fn layout(&self) -> &Layout {
            &self.layout
        }
        fn init_params(&self, _: &mut Rng) -> ModelParams {
            ModelParams::new(self.layout.clone(), vec![0.0]).unwrap()
        }
        fn forward(&self, left: &Image, _: &Image, _: &ModelParams) -> Result<DisparityMap> {
            let (h, w) = (left.height(), left.width());
            let s = w as f64 / self.base_width;
            let [a, b, c] = self.coef;
            DisparityMap::from_field(Field::from_fn(h, w, |y, x| {
                s * (a + b * x as f64 / (w - 1) as f64 + c * y as f64 / (h - 1) as f64)
            }))
        }
        fn backward(&self, _: &Image, _: &Image, p: &ModelParams, _: &Field) -> Result<ParamGrad> {
            Ok(ParamGrad::zeros(p.layout()))
        }
    }

    fn gray(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = Rng::new(seed);
        Image::from_fn(h, w, 3, |_, _, _| rng.uniform(0.0, 255.0)).unwrap()
    }

    /// Ignores its inputs and predicts `c` everywhere.
    struct ConstMock(LinearMock, f64);

    impl StereoModel for ConstMock {
        fn max_disparity(&self) -> usize {
            64
        }
        fn layout(&self) -> &Layout {
            self.0.layout()
        }
        fn init_params(&self, rng: &mut Rng) -> ModelParams {
            self.0.init_params(rng)
        }
        fn forward(&self, left: &Image, _: &Image, _: &ModelParams) -> Result<DisparityMap> {
            DisparityMap::filled(left.height(), left.width(), self.1)
        }
        fn backward(&self, a: &Image, b: &Image, p: &ModelParams, c: &Field) -> Result<ParamGrad> {
            self.0.backward(a, b, p, c)
        }
    }

    #[test]
    fn constant_model_zooms_to_c_over_r() {
        let m = ConstMock(LinearMock::new(40, [0.0; 3]), 6.0);
        let (l, r) = (gray(40, 40, 1), gray(40, 40, 2));
        let theta = m.init_params(&mut Rng::new(0));
        let t = zoom_target(&m, &theta, &l, &r, 1.5).unwrap();
        assert_eq!((t.height(), t.width()), (40, 40));
        assert!(t.data().iter().all(|&v| v == 6.0 / 1.5));
    }

    #[test]
    fn scale_equivariant_mock_is_identity() {
        let m = LinearMock::new(40, [3.0, 2.0, -1.5]);
        let (l, r) = (gray(40, 40, 1), gray(40, 40, 2));
        let theta = m.init_params(&mut Rng::new(0));
        let direct = m.forward(&l, &r, &theta).unwrap();
        for ratio in [1.5, 2.0, 1.25] {
            let t = zoom_target(&m, &theta, &l, &r, ratio).unwrap();
            for (a, b) in t.data().iter().zip(direct.data()) {
                assert!((a - b).abs() < 1e-6, "{a} {b} at r={ratio}");
            }
        }
        let t = zoom_target(&m, &theta, &l, &r, 1.0).unwrap();
        assert_eq!(t, direct);
        assert!(zoom_target(&m, &theta, &l, &r, 0.5).is_err());
    }

    fn shifted_pair(h: usize, w: usize, shift: usize, seed: u64) -> StereoPair {
        let wide = gray(h, w + shift, seed);
        let left = wide.crop(0, 0, h, w).unwrap();
        let right = wide.crop(0, shift, h, w).unwrap();
        StereoPair::domain(left, right).unwrap()
    }

    #[test]
    fn validation_contracts() {
        let zero = LinearMock::new(20, [0.0; 3]);
        let theta = zero.init_params(&mut Rng::new(0));
        let img = gray(20, 20, 3);
        let same = StereoPair::domain(img.clone(), img).unwrap();
        assert_eq!(validate(&zero, &theta, std::slice::from_ref(&same)).unwrap(), 99.0);

        let truth = LinearMock::new(20, [3.0, 0.0, 0.0]);
        let shifted = shifted_pair(20, 20, 3, 4);
        assert_eq!(validate(&truth, &theta, std::slice::from_ref(&shifted)).unwrap(), 99.0);

        let a = pair_psnr(&zero, &theta, &shifted).unwrap();
        let b = pair_psnr(&zero, &theta, &same).unwrap();
        let both = validate(&zero, &theta, &[shifted, same]).unwrap();
        assert!((both - (a + b) / 2.0).abs() < 1e-12);
        assert!(validate(&zero, &theta, &[]).is_err());
    }

    fn toy_setup() -> (ToyModel, ModelParams, Vec<StereoPair>, Vec<StereoPair>, Vec<StereoPair>) {
        let model = ToyModel::new(3, 4);
        let theta = model.init_params(&mut Rng::new(9));
        let domain: Vec<_> = (0..3).map(|s| shifted_pair(20, 20, 2, s)).collect();
        let synth: Vec<_> = (0..3)
            .map(|s| {
                let p = shifted_pair(20, 20, 2, 10 + s);
                StereoPair::synthetic(
                    p.left().clone(),
                    p.right().clone(),
                    DisparityMap::filled(20, 20, 2.0).unwrap(),
                )
                .unwrap()
            })
            .collect();
        let val = vec![shifted_pair(20, 20, 2, 30)];
        (model, theta, domain, synth, val)
    }

    fn small_config() -> AdaptConfig {
        AdaptConfig {
            batch_size: 2,
            lr: 1e-3,
            k_max: 4,
            validate_every: 2,
            crop_size: 20,
            weights: LossWeights {
                patch_side: 10,
                ..LossWeights::default()
            },
            ..AdaptConfig::default()
        }
    }

    #[test]
    fn zero_iterations_returns_initial() {
        let (model, theta, domain, synth, val) = toy_setup();
        let config = AdaptConfig {
            k_max: 0,
            ..small_config()
        };
        let out = adapt(&model, &theta, &domain, &synth, &val, &config, &mut |_| Ok(())).unwrap();
        assert!(out.best_theta.bit_eq(&theta));
        let v0 = validate(&model, &theta, &val).unwrap();
        assert_eq!(out.best_psnr, Some(v0));
        assert_eq!(out.validations, vec![(0, v0)]);
    }

    #[test]
    fn runs_are_reproducible_and_best_is_tracked() {
        let (model, theta, domain, synth, val) = toy_setup();
        let config = small_config();
        let mut log_a = Vec::new();
        let a = adapt(&model, &theta, &domain, &synth, &val, &config, &mut |r| {
            log_a.push(*r);
            Ok(())
        })
        .unwrap();
        let b = adapt(&model, &theta, &domain, &synth, &val, &config, &mut |_| Ok(())).unwrap();
        assert!(a.best_theta.bit_eq(&b.best_theta));
        assert!(a.final_theta.bit_eq(&b.final_theta));
        assert!(!a.final_theta.bit_eq(&theta));

        assert_eq!(a.validations.len(), 3);
        let best = a.validations.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(a.best_psnr, Some(best));
        assert_eq!(validate(&model, &a.best_theta, &val).unwrap(), best);

        let iters = log_a
            .iter()
            .filter(|r| matches!(r, LogRecord::Iteration { .. }))
            .count();
        assert_eq!(iters, 4);
        let json = log_a[0].to_json();
        assert_eq!(json["event"], "val");
        assert_eq!(json["iter"], 0);
    }

    #[test]
    fn one_pool_thread_matches_default_pool() {
        let (model, theta, domain, synth, val) = toy_setup();
        let config = small_config();
        let a = adapt(&model, &theta, &domain, &synth, &val, &config, &mut |_| Ok(())).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool
            .install(|| adapt(&model, &theta, &domain, &synth, &val, &config, &mut |_| Ok(())))
            .unwrap();
        assert!(a.final_theta.bit_eq(&b.final_theta));
    }

    #[test]
    fn epoch_draws_each_example_once() {
        let mut rng = Rng::new(5);
        let theta = LinearMock::new(1, [0.0; 3]).init_params(&mut Rng::new(0));
        let mut state = AdaptState::new(theta, 7, &mut rng);
        for _ in 0..3 {
            let mut seen: Vec<usize> = (0..7).map(|_| state.draw(&mut rng)).collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..7).collect::<Vec<_>>());
        }
    }

    #[test]
    fn degenerate_modes_run() {
        let (model, theta, domain, synth, val) = toy_setup();
        let zole_s = AdaptConfig {
            weights: LossWeights {
                lambda_agg: 0.0,
                tau: 0.0,
                ..small_config().weights
            },
            ..small_config()
        };
        adapt(&model, &theta, &domain, &synth, &val, &zole_s, &mut |_| Ok(())).unwrap();
        let out = pretrain(&model, &theta, &synth, &small_config(), &mut |_| Ok(())).unwrap();
        assert!(!out.bit_eq(&theta));
        let only_domain = adapt(&model, &theta, &domain, &[], &val, &small_config(), &mut |_| Ok(()));
        assert!(only_domain.is_ok());
    }

    #[test]
    fn rejects_bad_inputs() {
        let (model, theta, domain, synth, val) = toy_setup();
        let config = small_config();
        let nolog = &mut |_: &LogRecord| Ok(());
        assert!(adapt(&model, &theta, &domain, &synth, &[], &config, nolog).is_err());
        assert!(adapt(&model, &theta, &[], &[], &val, &config, nolog).is_err());
        assert!(adapt(&model, &theta, &synth, &[], &val, &config, nolog).is_err());
        assert!(pretrain(&model, &theta, &domain, &config, nolog).is_err());
        let odd = AdaptConfig {
            crop_size: 15,
            ..config.clone()
        };
        assert!(adapt(&model, &theta, &domain, &synth, &val, &odd, nolog).is_err());
        let big = AdaptConfig {
            crop_size: 40,
            ..config
        };
        assert!(adapt(&model, &theta, &domain, &synth, &val, &big, nolog).is_err());
        assert!(AdaptConfig {
            r: 1.0,
            ..AdaptConfig::default()
        }
        .validate()
        .is_err());
        let parsed: std::result::Result<AdaptConfig, _> = serde_json::from_str(r#"{"k_mx": 3}"#);
        assert!(parsed.is_err());
        let parsed: AdaptConfig = serde_json::from_str(r#"{"k_max": 3, "weights": {"lambda_agg": 0.0}}"#).unwrap();
        assert_eq!(parsed.k_max, 3);
        assert_eq!(parsed.weights.tau, 1.2);
    }
}
