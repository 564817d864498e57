//! Command-line front end: `gen-data`, `pretrain`, `adapt`, `eval`,
//! `predict` and `graph-dump`.
//!
//! Exit codes: 0 on success, 1 for user errors (bad flags, files, configs),
//! 2 for internal failures such as a diverging run.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::adapt::{adapt, pretrain, zoom_target, AdaptConfig, LogRecord};
use crate::datagen::{DomainDegradation, SceneSpec};
use crate::dataset::{generate_samples, load_role, write_dataset, Role, Sample};
use crate::eval::{epe, psnr, ssim, three_pixel_error, warp_right_to_left};
use crate::graph::build_graph;
use crate::imgio::{read_pfm, read_pnm, write_pfm};
use crate::loss::build_exemplars;
use crate::model::{read_checkpoint, write_checkpoint, ModelParams, StereoModel, ToyModel};
use crate::patch::PatchGrid;
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "zole", version, about = "Zoom-and-learn self-adaptation for stereo matching")]
pub struct Cli {
    /// Maximum worker threads; results do not depend on it [default: all cores].
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a procedural stereo dataset.
    GenData(GenDataArgs),
    /// Supervised training on synthetic pairs from a fresh or given model.
    Pretrain(PretrainArgs),
    /// Self-adapt a model to unlabeled domain pairs.
    Adapt(AdaptArgs),
    /// Report EPE / 3-pixel error / warp PSNR / warp SSIM on a dataset.
    Eval(EvalArgs),
    /// Write predicted disparity maps as PFM files.
    Predict(PredictArgs),
    /// Print the exemplar graph of one patch.
    GraphDump(GraphDumpArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of pairs.
    #[arg(long)]
    pub count: usize,
    /// Dataset role.
    #[arg(long, value_enum)]
    pub role: Role,
    /// Scene spec JSON [default: 160x160, 8 shapes, disparities 1..9, texture scale 4, seed 0].
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Degradation JSON for domain/val/test roles [default: noise {6,10}, brightness {0.8,1,1.2}, gamma ±0.25, v-shift 1].
    #[arg(long)]
    pub degradation: Option<PathBuf>,
    /// Overrides the spec's base seed [default: the spec's seed].
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Training flags; each overrides the matching config key.
#[derive(Debug, Args)]
pub struct TrainFlags {
    /// AdaptConfig JSON; unknown keys are rejected [default: built-in values].
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Iterations, `k_max` [default: 10000].
    #[arg(long)]
    pub iters: Option<usize>,
    /// Learning rate, `lr` [default: 5e-5].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Batch size, `batch_size` [default: 6].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Random crop side, `crop_size` [default: 160].
    #[arg(long)]
    pub crop_size: Option<usize>,
    /// RNG seed, `seed` [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON-lines training log [default: none].
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// Synthetic dataset directory.
    #[arg(long)]
    pub synth_dir: PathBuf,
    /// Output checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    /// Starting checkpoint [default: fresh toy model seeded by --seed].
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Maximum disparity of a fresh model.
    #[arg(long, default_value_t = 16)]
    pub max_disparity: usize,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    /// Unlabeled domain dataset directory.
    #[arg(long)]
    pub domain_dir: PathBuf,
    /// Synthetic dataset directory.
    #[arg(long)]
    pub synth_dir: PathBuf,
    /// Validation dataset directory.
    #[arg(long)]
    pub val_dir: PathBuf,
    /// Pretrained checkpoint.
    #[arg(long)]
    pub init: PathBuf,
    /// Output checkpoint (best validated parameters).
    #[arg(long)]
    pub out: PathBuf,
    /// Validation interval, `validate_every` [default: 500].
    #[arg(long)]
    pub validate_every: Option<usize>,
    /// Zoom ratio, `r` [default: 1.5].
    #[arg(long)]
    pub zoom: Option<f64>,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory.
    #[arg(long)]
    pub data_dir: PathBuf,
    /// Evaluate zoom targets at this ratio instead of plain predictions.
    #[arg(long, default_value_t = 1.0)]
    pub zoom: f64,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory.
    #[arg(long)]
    pub pair_dir: PathBuf,
    /// Directory for `<name>.pfm` outputs.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Zoom ratio; 1 means a plain forward pass.
    #[arg(long, default_value_t = 1.0)]
    pub zoom: f64,
}

#[derive(Debug, Args)]
pub struct GraphDumpArgs {
    /// Left image (PGM or PPM).
    #[arg(long)]
    pub left: PathBuf,
    /// Current prediction (PFM).
    #[arg(long)]
    pub curr: PathBuf,
    /// Zoomed prediction (PFM).
    #[arg(long)]
    pub fine: PathBuf,
    /// Patch index, row-major over the patch grid.
    #[arg(long)]
    pub patch: usize,
    /// AdaptConfig JSON supplying the loss weights [default: w_left 0.3, w_curr 1, w_fine 0.8, alpha 0.2, patch side 20].
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load_config(flags: &TrainFlags) -> Result<AdaptConfig> {
    let mut config = match &flags.config {
        Some(p) => read_json(p)?,
        None => AdaptConfig::default(),
    };
    if let Some(v) = flags.iters {
        config.k_max = v;
    }
    if let Some(v) = flags.lr {
        config.lr = v;
    }
    if let Some(v) = flags.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = flags.crop_size {
        config.crop_size = v;
    }
    if let Some(v) = flags.seed {
        config.seed = v;
    }
    Ok(config)
}

/// Appends JSON lines to a file, or discards records without one.
struct LogSink(Option<BufWriter<File>>);

impl LogSink {
    fn open(path: Option<&Path>) -> Result<Self> {
        path.map(|p| File::create(p).map(BufWriter::new).map_err(|e| Error::io(p, e)))
            .transpose()
            .map(LogSink)
    }

    fn record(&mut self, r: &LogRecord) -> Result<()> {
        if let Some(w) = &mut self.0 {
            writeln!(w, "{}", r.to_json()).map_err(|e| Error::io("training log", e))?;
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        if let Some(mut w) = self.0 {
            w.flush().map_err(|e| Error::io("training log", e))?;
        }
        Ok(())
    }
}

fn load_model(path: &Path) -> Result<(ToyModel, ModelParams)> {
    let params = read_checkpoint(path)?;
    Ok((ToyModel::for_params(&params)?, params))
}

fn pairs(samples: Vec<Sample>) -> Vec<crate::StereoPair> {
    samples.into_iter().map(|s| s.pair).collect()
}

fn gen_data(args: &GenDataArgs) -> Result<()> {
    let mut spec: SceneSpec = match &args.spec {
        Some(p) => read_json(p)?,
        None => SceneSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let deg: DomainDegradation = match &args.degradation {
        Some(p) => read_json(p)?,
        None => DomainDegradation::default(),
    };
    let samples = generate_samples(args.role, args.count, &spec, &deg)?;
    write_dataset(&args.out, args.role, &samples, Some(&spec), Some(&deg))?;
    eprintln!(
        "wrote {} {:?} pairs to {}",
        samples.len(),
        args.role,
        args.out.display()
    );
    Ok(())
}

fn run_pretrain(args: &PretrainArgs) -> Result<()> {
    let config = load_config(&args.train)?;
    let synth = pairs(load_role(&args.synth_dir, &[Role::Synthetic])?);
    let (model, theta0) = match &args.init {
        Some(p) => load_model(p)?,
        None => {
            let model = ToyModel::new(3, args.max_disparity);
            let theta = model.init_params(&mut Rng::new(config.seed));
            (model, theta)
        }
    };
    let mut log = LogSink::open(args.train.log.as_deref())?;
    let theta = pretrain(&model, &theta0, &synth, &config, &mut |r| log.record(r))?;
    log.finish()?;
    write_checkpoint(&args.out, &theta)
}

fn run_adapt(args: &AdaptArgs) -> Result<()> {
    let mut config = load_config(&args.train)?;
    if let Some(v) = args.validate_every {
        config.validate_every = v;
    }
    if let Some(v) = args.zoom {
        config.r = v;
    }
    let domain = pairs(load_role(&args.domain_dir, &[Role::Domain])?);
    let synth = pairs(load_role(&args.synth_dir, &[Role::Synthetic])?);
    let val = pairs(load_role(&args.val_dir, &[Role::Val, Role::Domain, Role::Test])?);
    let (model, theta0) = load_model(&args.init)?;
    let mut log = LogSink::open(args.train.log.as_deref())?;
    let out = adapt(&model, &theta0, &domain, &synth, &val, &config, &mut |r| log.record(r))?;
    log.finish()?;
    if let Some(p) = out.best_psnr {
        eprintln!("best validation PSNR {p:.3} dB");
    }
    write_checkpoint(&args.out, &out.best_theta)
}

fn predict_one(model: &ToyModel, theta: &ModelParams, sample: &Sample, zoom: f64) -> Result<crate::DisparityMap> {
    let pair = &sample.pair;
    if zoom == 1.0 {
        model.forward(pair.left(), pair.right(), theta)
    } else {
        zoom_target(model, theta, pair.left(), pair.right(), zoom)
    }
}

#[derive(Debug, Serialize)]
struct PairMetrics {
    name: String,
    epe: Option<f64>,
    three_px_pct: Option<f64>,
    psnr: f64,
    ssim: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn run_eval(args: &EvalArgs) -> Result<()> {
    let (model, theta) = load_model(&args.checkpoint)?;
    let samples = load_role(&args.data_dir, &[Role::Synthetic, Role::Domain, Role::Val, Role::Test])?;
    let mut rows = Vec::with_capacity(samples.len());
    for s in &samples {
        let pred = predict_one(&model, &theta, s, args.zoom)?;
        let (warped, valid) = warp_right_to_left(s.pair.right(), &pred)?;
        let (e, t) = match &s.ground_truth {
            Some(gt) => {
                let mask = s.eval_mask();
                (Some(epe(&pred, gt, &mask)?), Some(three_pixel_error(&pred, gt, &mask)?))
            }
            None => (None, None),
        };
        rows.push(PairMetrics {
            name: s.name.clone(),
            epe: e,
            three_px_pct: t,
            psnr: psnr(&warped, s.pair.left(), &valid)?,
            ssim: ssim(&warped, s.pair.left())?,
        });
    }
    let summary = serde_json::json!({
        "pairs": rows,
        "mean": {
            "epe": mean(rows.iter().filter_map(|r| r.epe)),
            "three_px_pct": mean(rows.iter().filter_map(|r| r.three_px_pct)),
            "psnr": mean(rows.iter().map(|r| r.psnr)),
            "ssim": mean(rows.iter().map(|r| r.ssim)),
        }
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn run_predict(args: &PredictArgs) -> Result<()> {
    let (model, theta) = load_model(&args.checkpoint)?;
    let samples = load_role(&args.pair_dir, &[Role::Synthetic, Role::Domain, Role::Val, Role::Test])?;
    fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let mut failed = 0usize;
    for s in &samples {
        let path = args.out_dir.join(format!("{}.pfm", s.name));
        if let Err(e) = predict_one(&model, &theta, s, args.zoom).and_then(|d| write_pfm(&path, &d)) {
            eprintln!("zole: {}: {e}", s.name);
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(Error::InvalidArgument(format!(
            "{failed} of {} pairs failed",
            samples.len()
        )));
    }
    Ok(())
}

fn run_graph_dump(args: &GraphDumpArgs) -> Result<()> {
    let weights = match &args.config {
        Some(p) => read_json::<AdaptConfig>(p)?.weights,
        None => AdaptConfig::default().weights,
    };
    weights.validate()?;
    let left = read_pnm(&args.left)?.to_gray();
    let curr = read_pfm(&args.curr)?;
    let fine = read_pfm(&args.fine)?;
    if !left.same_shape(&curr) || !left.same_shape(&fine) {
        return Err(Error::Dimension("left image and disparity maps differ in size".into()));
    }
    let grid = PatchGrid::for_map(left.height(), left.width(), weights.patch_side)?;
    if args.patch >= grid.patch_count() {
        return Err(Error::IndexOutOfRange {
            index: args.patch,
            count: grid.patch_count(),
        });
    }
    let ex = build_exemplars(&left, &curr, &fine, &grid, args.patch, &weights)?;
    let text = build_graph(&ex, weights.alpha, grid.patch_side())?.to_text();
    match &args.out {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Pretrain(a) => run_pretrain(a),
        Command::Adapt(a) => run_adapt(a),
        Command::Eval(a) => run_eval(a),
        Command::Predict(a) => run_predict(a),
        Command::GraphDump(a) => run_graph_dump(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let rendered = e.to_string();
            let line = rendered
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid usage");
            eprintln!("zole: {}", line.trim_start_matches("error: "));
            return 1;
        }
    };
    let result = match cli.workers {
        Some(0) => Err(Error::InvalidArgument("--workers must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
            .and_then(|pool| pool.install(|| dispatch(&cli))),
        None => dispatch(&cli),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("zole: error: {e}");
            if e.is_user_error() {
                1
            } else {
                2
            }
        }
    }
}
