//! Command-line driver: dataset generation, training, evaluation, and
//! rollout benchmarks, all configured by one strict JSON file.
//!
//! The config's root seed is split into per-subsystem seeds (data, model
//! init, training), so any stage reruns identically on its own; the
//! per-section seed fields in the file are derived, never read. Every
//! artifact embeds a hash of the effective config that produced it.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::array::{ArrayError, Scalar};
use crate::data::format::{read_dataset, write_dataset};
use crate::data::{generate, DataConfig, DataError, Dataset};
use crate::eval::bench::{bench_rollout, RolloutMode, TimingRecord, DEFAULT_BENCH_STEPS};
use crate::eval::report::{
    write_bench_csv, write_heatmap_csv, write_report_json, write_temporal_csv, EvalReport,
};
use crate::eval::zssr::{eval_spatial_zssr, eval_temporal_zssr};
use crate::eval::{predict_all, report_from_predictions, EvalError};
use crate::model::checkpoint::{read_checkpoint, write_checkpoint, CheckpointError};
use crate::model::forward::{GridSpec, Model};
use crate::model::ModelConfig;
use crate::rng::SeedSplit;
use crate::train::state::{load_train_state, save_train_state};
use crate::train::{write_log, TrainConfig, TrainError, Trainer};

pub const DATASET_FILE: &str = "dataset.vcnf";
pub const CHECKPOINT_FILE: &str = "checkpoint.vcnp";
pub const STATE_FILE: &str = "train_state.vcnt";
pub const LOG_FILE: &str = "train_log.csv";
pub const REPORT_FILE: &str = "report.json";
pub const TEMPORAL_FILE: &str = "temporal_error.csv";
pub const HEATMAP_FILE: &str = "heatmap.csv";
pub const BENCH_FILE: &str = "bench.csv";
pub const PREDICTIONS_FILE: &str = "predictions.vcnf";
pub const SPATIAL_ZSSR_FILE: &str = "zssr_spatial.json";
pub const TEMPORAL_ZSSR_FILE: &str = "zssr_temporal.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {what}")]
    Config { what: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Array(#[from] ArrayError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    /// Spatial super-resolution multiplier; 0 or 1 disables the study.
    pub spatial_zssr: usize,
    /// Dense frame count for the temporal study; 0 disables it.
    pub temporal_zssr: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { spatial_zssr: 0, temporal_zssr: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root seed; `data.seed`, `model.seed`, and `train.seed` are derived
    /// from it and overwritten at load time.
    pub seed: u64,
    /// Training precision, "f32" or "f64". Checkpoint payloads and
    /// evaluation stay float32 either way.
    pub precision: String,
    pub out: String,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            precision: "f32".into(),
            out: "out".into(),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalOptions::default(),
        }
    }
}

impl RunConfig {
    /// Overwrites the per-subsystem seeds from the root seed.
    pub fn derive_seeds(&mut self) {
        let split = SeedSplit::new(self.seed);
        self.data.seed = split.subsystem("data");
        self.model.seed = split.subsystem("init");
        self.train.seed = split.subsystem("train");
    }
}

/// SHA-256 of the canonical JSON form of the effective config. The output
/// directory is blanked first: it decides where artifacts land, not what
/// they contain, so moving a run must not change its identity.
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut keyed = cfg.clone();
    keyed.out = String::new();
    let bytes = serde_json::to_vec(&keyed).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn collect_unknown_keys(user: &Value, reference: &Value, path: &str, out: &mut Vec<String>) {
    let (Value::Object(u), Value::Object(r)) = (user, reference) else {
        return;
    };
    for (key, val) in u {
        let full = if path.is_empty() { key.clone() } else { format!("{path}.{key}") };
        match r.get(key) {
            None => out.push(full),
            Some(rv) => collect_unknown_keys(val, rv, &full, out),
        }
    }
}

/// Parses a config file, rejecting unknown keys with a list of every
/// offender rather than just the first.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config { what: format!("cannot read {}: {e}", path.display()) })?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config { what: format!("{}: {e}", path.display()) })?;
    let reference = serde_json::to_value(RunConfig::default()).expect("default serializes");
    let mut unknown = Vec::new();
    collect_unknown_keys(&value, &reference, "", &mut unknown);
    if !unknown.is_empty() {
        return Err(CliError::Config {
            what: format!("unknown keys: {}", unknown.join(", ")),
        });
    }
    let cfg: RunConfig = serde_json::from_value(value)
        .map_err(|e| CliError::Config { what: format!("{}: {e}", path.display()) })?;
    if cfg.precision != "f32" && cfg.precision != "f64" {
        return Err(CliError::Config {
            what: format!("precision must be \"f32\" or \"f64\", got {:?}", cfg.precision),
        });
    }
    Ok(cfg)
}

/// Caps the global worker pool when VCNEF_THREADS is set.
pub fn init_threads() {
    if let Ok(v) = std::env::var("VCNEF_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "vcnef", about = "PDE surrogate pipeline: generate, train, eval, bench")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the config's `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Root seed; overrides the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Dataset to train on; defaults to <out>/dataset.vcnf.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Total epochs; overrides the config.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Per-epoch starting-frame randomization; overrides the config.
    #[arg(long)]
    pub randomized_starts: Option<bool>,
    /// Continue from <out>/train_state.vcnt instead of starting fresh.
    #[arg(long)]
    pub resume: bool,
    /// Pause after this many total epochs; resume later to finish.
    #[arg(long)]
    pub stop_after: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Dataset to evaluate on; defaults to <out>/dataset.vcnf.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Checkpoint to load; defaults to <out>/checkpoint.vcnp.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Spatial super-resolution multiplier; overrides the config.
    #[arg(long)]
    pub spatial_zssr: Option<usize>,
    /// Dense frame count for temporal super-resolution; overrides the config.
    #[arg(long)]
    pub temporal_zssr: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Checkpoint to load; defaults to <out>/checkpoint.vcnp.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Comma-separated rollout lengths.
    #[arg(long, value_delimiter = ',')]
    pub steps: Option<Vec<usize>>,
    /// "parallel", "sequential", or "both".
    #[arg(long, default_value = "both")]
    pub mode: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a dataset file from the config's data section.
    Generate(CommonArgs),
    /// Train a model on a generated dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint against a dataset, with optional
    /// super-resolution studies.
    Eval(EvalArgs),
    /// Time parallel and sequential rollouts of a checkpoint.
    Bench(BenchArgs),
}

struct Ctx {
    cfg: RunConfig,
    hash: String,
    out: PathBuf,
}

fn prepare(common: &CommonArgs) -> Result<Ctx, CliError> {
    let mut cfg = load_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = out.display().to_string();
    }
    cfg.derive_seeds();
    let hash = config_hash(&cfg);
    let out = PathBuf::from(&cfg.out);
    fs::create_dir_all(&out)?;
    Ok(Ctx { cfg, hash, out })
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Command::Generate(args) => cmd_generate(&prepare(&args)?),
        Command::Train(args) => {
            let mut ctx = prepare(&args.common)?;
            if let Some(epochs) = args.epochs {
                ctx.cfg.train.epochs = epochs;
                ctx.hash = config_hash(&ctx.cfg);
            }
            if let Some(r) = args.randomized_starts {
                ctx.cfg.train.randomized_starts = r;
                ctx.hash = config_hash(&ctx.cfg);
            }
            cmd_train(&ctx, &args)
        }
        Command::Eval(args) => {
            let mut ctx = prepare(&args.common)?;
            if let Some(r) = args.spatial_zssr {
                ctx.cfg.eval.spatial_zssr = r;
            }
            if let Some(k) = args.temporal_zssr {
                ctx.cfg.eval.temporal_zssr = k;
            }
            cmd_eval(&ctx, &args)
        }
        Command::Bench(args) => cmd_bench(&prepare(&args.common)?, &args),
    }
}

fn cmd_generate(ctx: &Ctx) -> Result<(), CliError> {
    let mut data = generate(&ctx.cfg.data)?;
    data.meta.config_hash = Some(ctx.hash.clone());
    let path = ctx.out.join(DATASET_FILE);
    write_dataset(&data, &path)?;
    let m = &data.meta;
    println!(
        "dataset: {} trajectories, {} frames, {} points, {} channels -> {}",
        m.n,
        m.n_t,
        m.s,
        m.c,
        path.display()
    );
    if m.pde == "burgers" {
        let mut drift = 0.0f64;
        for i in 0..m.n {
            let vals = data.sample_values(i);
            let mass0: f64 = vals.data()[..m.s].iter().map(|v| v * m.dx).sum();
            for k in 1..m.n_t {
                let mass: f64 =
                    vals.data()[k * m.s..(k + 1) * m.s].iter().map(|v| v * m.dx).sum();
                drift = drift.max((mass - mass0).abs());
            }
        }
        println!("conservation: max mass drift {drift:.3e}");
    }
    Ok(())
}

fn train_loop<T: Scalar>(
    ctx: &Ctx,
    args: &TrainArgs,
    data: &Dataset<T>,
) -> Result<(), CliError> {
    let grid = GridSpec::line(data.meta.unit_grid());
    let horizon = *data.meta.times.last().expect("validated dataset");
    let state_path = ctx.out.join(STATE_FILE);
    let log_path = ctx.out.join(LOG_FILE);

    let mut trainer: Trainer<T> = if args.resume {
        let t = load_train_state::<T>(&state_path)?;
        if t.cfg != ctx.cfg.train {
            return Err(CliError::Config {
                what: "training state was produced by a different train configuration".into(),
            });
        }
        if t.model.cfg != ctx.cfg.model {
            return Err(CliError::Config {
                what: "training state was produced by a different model configuration".into(),
            });
        }
        t
    } else {
        if log_path.exists() {
            fs::remove_file(&log_path)?;
        }
        let model = Model::new(ctx.cfg.model.clone())?;
        Trainer::new(model, ctx.cfg.train.clone(), horizon)?
    };

    let target = args
        .stop_after
        .map(|s| s.min(ctx.cfg.train.epochs as u64))
        .unwrap_or(ctx.cfg.train.epochs as u64);
    while trainer.epoch < target {
        let report = trainer.train_epoch(data, &grid)?;
        write_log(&log_path, &report.rows)?;
        println!(
            "epoch {:>4}: mean loss {:.6e}, {} steps",
            trainer.epoch - 1,
            report.mean_loss,
            report.rows.len()
        );
    }

    let meta = trainer.checkpoint_meta(Some(ctx.hash.clone()));
    write_checkpoint(&ctx.out.join(CHECKPOINT_FILE), &meta, &trainer.model.store)?;
    save_train_state(&state_path, &trainer, Some(ctx.hash.clone()))?;
    println!(
        "checkpoint: epoch {} -> {}",
        trainer.epoch,
        ctx.out.join(CHECKPOINT_FILE).display()
    );
    Ok(())
}

fn cmd_train(ctx: &Ctx, args: &TrainArgs) -> Result<(), CliError> {
    let data_path =
        args.data.clone().unwrap_or_else(|| ctx.out.join(DATASET_FILE));
    let data = read_dataset(&data_path)?;
    match ctx.cfg.precision.as_str() {
        "f64" => train_loop::<f64>(ctx, args, &data.cast()),
        _ => train_loop::<f32>(ctx, args, &data),
    }
}

fn check_finite(report: &EvalReport) -> Result<(), CliError> {
    if !report.nrmse_mean.is_finite() || !report.brmse_mean.is_finite() {
        return Err(CliError::Config {
            what: format!(
                "evaluation produced non-finite aggregates (nrmse {}, brmse {})",
                report.nrmse_mean, report.brmse_mean
            ),
        });
    }
    Ok(())
}

/// Rebuilds the generator settings that produced `data`, with the IC
/// family taken from the run config. Regenerating at a finer resolution
/// then yields the same trajectories sampled on more points.
fn regeneration_config(cfg: &RunConfig, data: &Dataset<f32>) -> DataConfig {
    let m = &data.meta;
    DataConfig {
        pde: m.pde.clone(),
        n: m.n,
        s: m.s,
        n_t: m.n_t,
        t_final: *m.times.last().expect("validated dataset"),
        param_values: m.params.iter().map(|p| p[0]).collect(),
        ic: cfg.data.ic.clone(),
        seed: m.seed,
    }
}

fn cmd_eval(ctx: &Ctx, args: &EvalArgs) -> Result<(), CliError> {
    let ckpt_path =
        args.checkpoint.clone().unwrap_or_else(|| ctx.out.join(CHECKPOINT_FILE));
    let (meta, model) = read_checkpoint(&ckpt_path)?;
    let data_path = args.data.clone().unwrap_or_else(|| ctx.out.join(DATASET_FILE));
    let data = read_dataset(&data_path)?;
    if data.meta.c != model.cfg.c {
        return Err(CliError::Config {
            what: format!(
                "checkpoint expects {} channels but dataset has {}",
                model.cfg.c, data.meta.c
            ),
        });
    }
    let grid = GridSpec::line(data.meta.unit_grid());
    let frames: Vec<usize> = (1..data.meta.n_t).collect();

    let preds = predict_all(
        &model,
        &data,
        &grid,
        &frames,
        meta.time_convention,
        meta.time_norm,
    )?;
    let mut report = report_from_predictions(&data, &frames, &preds)?;
    report.config_hash = Some(ctx.hash.clone());
    check_finite(&report)?;

    let m = &data.meta;
    let frame_len = m.s * m.c;
    let mut with_ic = Vec::with_capacity(m.n * (frames.len() + 1) * frame_len);
    for i in 0..m.n {
        with_ic.extend_from_slice(data.frame(i, 0).data());
        let base = i * frames.len() * frame_len;
        with_ic.extend_from_slice(&preds.data()[base..base + frames.len() * frame_len]);
    }
    let mut pred_ds = Dataset {
        meta: m.clone(),
        values: crate::array::Array::from_vec(
            vec![m.n, frames.len() + 1, m.s, m.c],
            with_ic,
        )?,
    };
    pred_ds.meta.config_hash = Some(ctx.hash.clone());
    write_dataset(&pred_ds, &ctx.out.join(PREDICTIONS_FILE))?;

    write_report_json(&ctx.out.join(REPORT_FILE), &report)?;
    write_temporal_csv(&ctx.out.join(TEMPORAL_FILE), &report)?;
    if let Some(h) = &report.heatmap {
        write_heatmap_csv(&ctx.out.join(HEATMAP_FILE), h)?;
    }
    println!(
        "eval: nRMSE {:.4} +- {:.4}, bRMSE {:.4e} ({} samples)",
        report.nrmse_mean, report.nrmse_std, report.brmse_mean, report.n_samples
    );

    let r = ctx.cfg.eval.spatial_zssr;
    if r > 1 {
        let mut fine_cfg = regeneration_config(&ctx.cfg, &data);
        fine_cfg.s *= r;
        let fine = generate(&fine_cfg)?.cast::<f32>();
        let mut zssr =
            eval_spatial_zssr(&model, &fine, data.meta.s, meta.time_convention, meta.time_norm)?;
        zssr.config_hash = Some(ctx.hash.clone());
        check_finite(&zssr)?;
        write_report_json(&ctx.out.join(SPATIAL_ZSSR_FILE), &zssr)?;
        println!(
            "spatial zssr: s={} nRMSE {:.4} ({}x base {:.4}, ratio {:.3})",
            fine_cfg.s,
            zssr.nrmse_mean,
            r,
            report.nrmse_mean,
            zssr.nrmse_mean / report.nrmse_mean
        );
    }

    let k_dense = ctx.cfg.eval.temporal_zssr;
    if k_dense > 0 {
        let mut dense_cfg = regeneration_config(&ctx.cfg, &data);
        dense_cfg.n_t = k_dense;
        let dense = generate(&dense_cfg)?.cast::<f32>();
        let z = eval_temporal_zssr(
            &model,
            &dense,
            data.meta.n_t,
            meta.time_convention,
            meta.time_norm,
        )?;
        check_finite(&z.dense)?;
        #[derive(Serialize)]
        struct TemporalOut<'a> {
            max_shared_diff: f64,
            dense: &'a EvalReport,
            coarse: &'a EvalReport,
            config_hash: &'a str,
        }
        let out = TemporalOut {
            max_shared_diff: z.max_shared_diff,
            dense: &z.dense,
            coarse: &z.coarse,
            config_hash: &ctx.hash,
        };
        let mut f = fs::File::create(ctx.out.join(TEMPORAL_ZSSR_FILE))?;
        serde_json::to_writer_pretty(&mut f, &out)?;
        println!(
            "temporal zssr: {} times nRMSE {:.4} vs {} times {:.4}, shared diff {:.3e}",
            k_dense,
            z.dense.nrmse_mean,
            data.meta.n_t,
            z.coarse.nrmse_mean,
            z.max_shared_diff
        );
    }
    Ok(())
}

fn cmd_bench(ctx: &Ctx, args: &BenchArgs) -> Result<(), CliError> {
    let ckpt_path =
        args.checkpoint.clone().unwrap_or_else(|| ctx.out.join(CHECKPOINT_FILE));
    let (_, model) = read_checkpoint(&ckpt_path)?;

    let mut probe_cfg = ctx.cfg.data.clone();
    probe_cfg.n = 1;
    let probe = generate(&probe_cfg)?.cast::<f32>();
    let u0 = probe.frame(0, 0);
    let grid = GridSpec::line(probe.meta.unit_grid());

    let steps: Vec<usize> =
        args.steps.clone().unwrap_or_else(|| DEFAULT_BENCH_STEPS.to_vec());
    let modes: Vec<RolloutMode> = match args.mode.as_str() {
        "both" => vec![RolloutMode::Parallel, RolloutMode::Sequential],
        other => vec![other
            .parse()
            .map_err(|e: String| CliError::Config { what: e })?],
    };

    let records: Vec<TimingRecord> =
        bench_rollout(&model, &grid, &u0, probe.params(0), &steps, &modes)?;
    write_bench_csv(&ctx.out.join(BENCH_FILE), &records)?;
    for r in &records {
        println!(
            "bench: {:>10} n={:<4} {:>10.3} ms  peak {:>12} bytes",
            r.mode, r.n_steps, r.wall_ms, r.peak_bytes
        );
    }
    Ok(())
}
