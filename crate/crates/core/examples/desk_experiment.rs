//! Desk-scale adaptation experiment: pretrain on synthetic scenes, then adapt
//! to degraded domain pairs with and without the graph regularizer.
//!
//! Environment overrides: `PRE`, `ITERS`, `LR_PRE`, `LR`, `CROP`,
//! `VAL_EVERY`, `LAMBDAS` (comma-separated), `PRE_CKPT` (cache for the
//! pretrained checkpoint).

use std::time::Instant;

use zole::adapt::{adapt, pretrain, validate, zoom_target, AdaptConfig, LogRecord};
use zole::datagen::{apply_degradation, generate_scene, DomainDegradation, Scene, SceneSpec};
use zole::eval::{epe, ValidityMask};
use zole::loss::LossWeights;
use zole::model::{read_checkpoint, write_checkpoint, ModelParams, StereoModel, ToyModel};
use zole::{DisparityMap, Rng, StereoPair};

fn env<T: std::str::FromStr>(key: &str, default: T) -> T {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn scene(seed: u64) -> Scene {
    generate_scene(&SceneSpec {
        seed,
        ..SceneSpec::default()
    })
    .unwrap()
}

type Truth = (DisparityMap, ValidityMask);

fn domain_set(base: u64, count: usize) -> (Vec<StereoPair>, Vec<Truth>) {
    let mut rng = Rng::new(base ^ 0xD0);
    (0..count)
        .map(|i| {
            let s = scene(base + i as u64);
            let pair = apply_degradation(&s.pair, &DomainDegradation::default(), &mut rng).unwrap();
            (pair, (s.pair.ground_truth().unwrap().clone(), s.visible()))
        })
        .unzip()
}

fn mean_epe(preds: impl Iterator<Item = DisparityMap>, truth: &[Truth]) -> f64 {
    preds
        .zip(truth)
        .map(|(p, (gt, m))| epe(&p, gt, m).unwrap())
        .sum::<f64>()
        / truth.len() as f64
}

fn test_epe(model: &ToyModel, theta: &ModelParams, pairs: &[StereoPair], truth: &[Truth]) -> f64 {
    mean_epe(
        pairs.iter().map(|p| model.forward(p.left(), p.right(), theta).unwrap()),
        truth,
    )
}

fn main() {
    let crop: usize = env("CROP", 80);
    let t0 = Instant::now();
    let synth: Vec<StereoPair> = (0..40).map(|i| scene(1000 + i).pair).collect();
    let (domain, _) = domain_set(2000, 40);
    let (val, _) = domain_set(3000, 10);
    let (test, truth) = domain_set(4000, 10);
    eprintln!("data {:.1}s", t0.elapsed().as_secs_f64());

    let model = ToyModel::new(3, 16);
    let cache = std::env::var("PRE_CKPT").ok();
    let pre = match cache.as_deref().filter(|p| std::path::Path::new(p).exists()) {
        Some(path) => read_checkpoint(path).unwrap(),
        None => {
            let config = AdaptConfig {
                lr: env("LR_PRE", 0.1),
                k_max: env("PRE", 1000),
                crop_size: crop,
                seed: 11,
                ..AdaptConfig::default()
            };
            let theta0 = model.init_params(&mut Rng::new(1));
            let mut smooth = 0.0;
            let pre = pretrain(&model, &theta0, &synth, &config, &mut |r| {
                if let LogRecord::Iteration { iter, total, .. } = r {
                    smooth = 0.98 * smooth + 0.02 * total;
                    if iter % 100 == 0 {
                        eprintln!("pretrain {iter} loss {smooth:.4}");
                    }
                }
                Ok(())
            })
            .unwrap();
            if let Some(path) = &cache {
                write_checkpoint(path, &pre).unwrap();
            }
            pre
        }
    };

    eprintln!(
        "unadapted: test EPE {:.4} val PSNR {:.3}",
        test_epe(&model, &pre, &test, &truth),
        validate(&model, &pre, &val).unwrap()
    );
    for r in [1.25, 1.5, 2.0] {
        let zoomed = test
            .iter()
            .map(|p| zoom_target(&model, &pre, p.left(), p.right(), r).unwrap());
        eprintln!("zoom {r}: test EPE {:.4}", mean_epe(zoomed, &truth));
    }

    let lambdas = std::env::var("LAMBDAS").unwrap_or_else(|_| "1.5,0".into());
    for lambda in lambdas.split(',').map(|v| v.trim().parse::<f64>().unwrap()) {
        let config = AdaptConfig {
            lr: env("LR", 0.01),
            k_max: env("ITERS", 1000),
            validate_every: env("VAL_EVERY", 100),
            crop_size: crop,
            seed: 12,
            weights: LossWeights {
                lambda_agg: lambda,
                ..LossWeights::default()
            },
            ..AdaptConfig::default()
        };
        let t = Instant::now();
        let out = adapt(&model, &pre, &domain, &synth, &val, &config, &mut |r| {
            if let LogRecord::Validation { iter, psnr } = r {
                eprintln!("  val {iter} {psnr:.3}");
            }
            Ok(())
        })
        .unwrap();
        eprintln!(
            "lambda {lambda}: best val PSNR {:.3} test EPE {:.4} ({:.1}s)",
            out.best_psnr.unwrap(),
            test_epe(&model, &out.best_theta, &test, &truth),
            t.elapsed().as_secs_f64()
        );
    }
}
