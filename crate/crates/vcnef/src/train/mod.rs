//! Training loop: one-cycle learning rate, randomized starting points, and
//! a fully deterministic step sequence.
//!
//! Each optimization step conditions the model on one frame of a batch of
//! trajectories and regresses every selected later frame in a single
//! parallel forward pass. All randomness (start schedule, batch order,
//! target subsampling) flows from one owned generator whose position is
//! part of the saved training state, so a resumed run replays the exact
//! remaining step sequence.

pub mod adam;
pub mod state;

use std::fs::OpenOptions;
use std::io::Write as IoWrite;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::array::graph::{Graph, NodeId};
use crate::array::{Array, ArrayError, Scalar};
use crate::data::{DataError, Dataset};
use crate::model::checkpoint::{CheckpointMeta, TimeConvention};
use crate::model::encoding::bind_params;
use crate::model::forward::{build_forward, BatchItem, GridSpec, Model};
use crate::rng::Rng;
use adam::Adam;

/// Random starting points drawn per epoch, beyond the always-present frame 0.
pub const RANDOM_STARTS_PER_EPOCH: usize = 10;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at step {step} (lr {lr:.3e}, grad norm {grad_norm}): {what}")]
    Diverged { step: u64, lr: f64, grad_norm: f64, what: String },
    #[error("training setup: {what}")]
    Setup { what: String },
    #[error(transparent)]
    Array(#[from] ArrayError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub max_lr: f64,
    pub seed: u64,
    /// Draw fresh interior starting frames every epoch; `false` always
    /// conditions on frame 0.
    pub randomized_starts: bool,
    /// Cap on target frames regressed per step; 0 keeps every frame after
    /// the start.
    pub time_subsample: usize,
    /// Rescale gradients to unit norm when they exceed it. Off by
    /// default; long runs at aggressive learning rates benefit from it.
    pub clip_grad: bool,
    pub time_convention: TimeConvention,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 8,
            max_lr: 1e-3,
            seed: 0,
            randomized_starts: true,
            time_subsample: 8,
            clip_grad: false,
            time_convention: TimeConvention::Relative,
        }
    }
}

/// One-cycle schedule: cosine ramp from max_lr/1000 to max_lr over the
/// first fifth of training, cosine decay to max_lr/10000 over the rest.
pub fn one_cycle_lr(step: u64, total_steps: u64, max_lr: f64) -> f64 {
    let low = max_lr * 1e-3;
    let end = max_lr * 1e-4;
    if total_steps <= 1 {
        return max_lr;
    }
    let pos = step as f64;
    let total = total_steps as f64;
    let warm = 0.2 * total;
    if pos < warm {
        let frac = pos / warm;
        low + (max_lr - low) * 0.5 * (1.0 - (std::f64::consts::PI * frac).cos())
    } else {
        let frac = ((pos - warm) / (total - warm)).min(1.0);
        end + (max_lr - end) * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
    }
}

/// Starting frames for one epoch: frame 0, then up to
/// [`RANDOM_STARTS_PER_EPOCH`] distinct interior frames in shuffled order.
/// The final frame never starts a step since nothing follows it.
pub fn starting_point_schedule(n_t: usize, rng: &mut Rng) -> Vec<usize> {
    assert!(n_t >= 2, "a trajectory needs at least two frames");
    let mut interior: Vec<usize> = (1..n_t - 1).collect();
    rng.shuffle(&mut interior);
    interior.truncate(RANDOM_STARTS_PER_EPOCH);
    let mut starts = vec![0];
    starts.extend(interior);
    starts
}

/// Steps one epoch contributes, for sizing the learning-rate cycle.
pub fn steps_per_epoch(n_samples: usize, n_t: usize, cfg: &TrainConfig) -> u64 {
    let starts = if cfg.randomized_starts {
        1 + RANDOM_STARTS_PER_EPOCH.min(n_t.saturating_sub(2))
    } else {
        1
    };
    let batches = n_samples.div_ceil(cfg.batch_size);
    (starts * batches) as u64
}

/// Mean squared error over every element of prediction and target.
pub fn mse_loss<T: Scalar>(
    g: &mut Graph<T>,
    pred: NodeId,
    target: NodeId,
) -> Result<NodeId, ArrayError> {
    let diff = g.sub(pred, target)?;
    let sq = g.mul(diff, diff)?;
    g.mean_all(sq)
}

/// Query times for the chosen target frames, normalized into (0, 1].
/// Relative convention measures from the conditioning frame and stretches
/// the remaining horizon to the full interval; absolute divides timestamps
/// by the final time.
pub fn query_times(
    times: &[f64],
    start: usize,
    targets: &[usize],
    convention: TimeConvention,
) -> Vec<f64> {
    let t_end = *times.last().expect("non-empty time grid");
    match convention {
        TimeConvention::Relative => {
            let t0 = times[start];
            targets.iter().map(|&k| (times[k] - t0) / (t_end - t0)).collect()
        }
        TimeConvention::Absolute => targets.iter().map(|&k| times[k] / t_end).collect(),
    }
}

/// One dataset read during training, for auditing what the loop touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Access {
    pub sample: usize,
    pub frame: usize,
    /// `false` for the conditioning frame, `true` for a regression target.
    pub target: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub epoch: u64,
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    pub grad_norm: f64,
    pub wall_ms: f64,
}

/// Appends rows to a CSV training log, writing the header on creation.
pub fn write_log(path: &Path, rows: &[LogRow]) -> Result<(), std::io::Error> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "epoch,step,lr,loss,grad_norm,wall_ms")?;
    }
    for r in rows {
        writeln!(f, "{},{},{},{},{},{}", r.epoch, r.step, r.lr, r.loss, r.grad_norm, r.wall_ms)?;
    }
    Ok(())
}

pub struct EpochReport {
    pub rows: Vec<LogRow>,
    pub mean_loss: f64,
}

#[derive(Debug)]
pub struct Trainer<T: Scalar> {
    pub model: Model<T>,
    pub cfg: TrainConfig,
    /// Horizon mapping dataset timestamps into the model's query interval;
    /// recorded in checkpoints so evaluation reproduces the mapping.
    pub time_norm: f64,
    pub epoch: u64,
    pub global_step: u64,
    /// When present, every dataset read is recorded here.
    pub access_log: Option<Vec<Access>>,
    opt: Adam<T>,
    rng: Rng,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: Model<T>, cfg: TrainConfig, time_norm: f64) -> Result<Self, TrainError> {
        if !(time_norm > 0.0) {
            return Err(TrainError::Setup { what: format!("time horizon {time_norm} must be positive") });
        }
        if cfg.batch_size == 0 || cfg.epochs == 0 {
            return Err(TrainError::Setup { what: "batch size and epochs must be positive".into() });
        }
        let opt = Adam::new(&model.store);
        let rng = Rng::new(cfg.seed, 0);
        Ok(Trainer {
            model,
            cfg,
            time_norm,
            epoch: 0,
            global_step: 0,
            access_log: None,
            opt,
            rng,
        })
    }

    pub(crate) fn from_state(
        model: Model<T>,
        cfg: TrainConfig,
        time_norm: f64,
        epoch: u64,
        global_step: u64,
        opt: Adam<T>,
        rng: Rng,
    ) -> Self {
        Trainer { model, cfg, time_norm, epoch, global_step, access_log: None, opt, rng }
    }

    pub fn optimizer(&self) -> &Adam<T> {
        &self.opt
    }

    pub fn rng_state(&self) -> crate::rng::RngState {
        self.rng.state()
    }

    /// Checkpoint metadata describing the current model and conventions.
    pub fn checkpoint_meta(&self, config_hash: Option<String>) -> CheckpointMeta {
        CheckpointMeta {
            model: self.model.cfg.clone(),
            time_norm: self.time_norm,
            time_convention: self.cfg.time_convention,
            seed: self.cfg.seed,
            epoch: self.epoch,
            config_hash,
        }
    }

    fn check_data(&self, data: &Dataset<T>, grid: &GridSpec) -> Result<(), TrainError> {
        data.validate()?;
        let m = &data.meta;
        let setup = |what: String| Err(TrainError::Setup { what });
        if m.c != self.model.cfg.c {
            return setup(format!("dataset has {} channels, model expects {}", m.c, self.model.cfg.c));
        }
        if m.params[0].len() != self.model.cfg.j {
            return setup(format!(
                "dataset has {} parameters per sample, model expects {}",
                m.params[0].len(),
                self.model.cfg.j
            ));
        }
        if grid.n_points() != m.s {
            return setup(format!("grid has {} points, dataset frames have {}", grid.n_points(), m.s));
        }
        if m.n_t < 2 {
            return setup("trajectories need at least two frames to train on".into());
        }
        let horizon = *m.times.last().expect("validated");
        if (horizon - self.time_norm).abs() > 1e-12 * self.time_norm.abs().max(1.0) {
            return setup(format!(
                "dataset horizon {horizon} differs from the trainer's {}",
                self.time_norm
            ));
        }
        Ok(())
    }

    /// Runs one full epoch and advances the internal counters. The
    /// learning-rate cycle spans `cfg.epochs` epochs of this dataset; extra
    /// epochs continue at the terminal rate.
    pub fn train_epoch(
        &mut self,
        data: &Dataset<T>,
        grid: &GridSpec,
    ) -> Result<EpochReport, TrainError> {
        self.check_data(data, grid)?;
        let m = &data.meta;
        let total_steps =
            self.cfg.epochs as u64 * steps_per_epoch(m.n, m.n_t, &self.cfg);

        let starts = if self.cfg.randomized_starts {
            starting_point_schedule(m.n_t, &mut self.rng)
        } else {
            vec![0]
        };
        let mut order: Vec<usize> = (0..m.n).collect();
        self.rng.shuffle(&mut order);

        let mut rows = Vec::new();
        let mut loss_sum = 0.0;
        for &start in &starts {
            let mut targets: Vec<usize> = (start + 1..m.n_t).collect();
            if self.cfg.time_subsample > 0 && targets.len() > self.cfg.time_subsample {
                self.rng.shuffle(&mut targets);
                targets.truncate(self.cfg.time_subsample);
                targets.sort_unstable();
            }
            let times = query_times(&m.times, start, &targets, self.cfg.time_convention);

            for chunk in order.chunks(self.cfg.batch_size) {
                let row = self.step(data, grid, start, &targets, &times, chunk, total_steps)?;
                loss_sum += row.loss;
                rows.push(row);
            }
        }
        self.epoch += 1;
        let mean_loss = loss_sum / rows.len() as f64;
        Ok(EpochReport { rows, mean_loss })
    }

    #[allow(clippy::too_many_arguments)]
    fn step(
        &mut self,
        data: &Dataset<T>,
        grid: &GridSpec,
        start: usize,
        targets: &[usize],
        times: &[f64],
        chunk: &[usize],
        total_steps: u64,
    ) -> Result<LogRow, TrainError> {
        let clock = Instant::now();
        let step = self.global_step;
        let lr = one_cycle_lr(step, total_steps, self.cfg.max_lr);
        let m = &data.meta;

        if let Some(log) = &mut self.access_log {
            for &i in chunk {
                log.push(Access { sample: i, frame: start, target: false });
                for &k in targets {
                    log.push(Access { sample: i, frame: k, target: true });
                }
            }
        }

        let u0s: Vec<Array<T>> = chunk.iter().map(|&i| data.frame(i, start)).collect();
        let items: Vec<BatchItem<T>> = chunk
            .iter()
            .zip(&u0s)
            .map(|(&i, u0)| BatchItem { u0, p: data.params(i), times })
            .collect();

        let frame = m.s * m.c;
        let block = m.n_t * frame;
        let mut target_data = Vec::with_capacity(chunk.len() * targets.len() * frame);
        for &i in chunk {
            for &k in targets {
                let base = i * block + k * frame;
                target_data.extend_from_slice(&data.values.data()[base..base + frame]);
            }
        }
        let target_arr =
            Array::from_vec(vec![chunk.len() * targets.len() * m.s, m.c], target_data)?;

        let diverged = |what: String| TrainError::Diverged { step, lr, grad_norm: f64::NAN, what };
        let wrap = |e: ArrayError| match e {
            ArrayError::NonFinite { op } => diverged(format!("non-finite values in {op}")),
            other => TrainError::Array(other),
        };

        let mut g: Graph<T> = Graph::new();
        let pm = bind_params(&mut g, &self.model.store, true).map_err(wrap)?;
        let out = build_forward(&mut g, &pm, &self.model.cfg, grid, &items).map_err(wrap)?;
        let target_node = g.constant(target_arr);
        let loss_node = mse_loss(&mut g, out, target_node).map_err(wrap)?;
        let loss = g.value(loss_node).map_err(wrap)?.item()?.to_f64();
        if !loss.is_finite() {
            return Err(diverged(format!("loss {loss}")));
        }

        let mut grads = g.backward_consuming(loss_node).map_err(wrap)?;
        drop(g);

        let mut norm_sq = 0.0f64;
        for grad in grads.values() {
            for &v in grad.data() {
                let v = v.to_f64();
                norm_sq += v * v;
            }
        }
        let grad_norm = norm_sq.sqrt();
        if !grad_norm.is_finite() {
            return Err(TrainError::Diverged {
                step,
                lr,
                grad_norm,
                what: "gradient norm is not finite".into(),
            });
        }
        if self.cfg.clip_grad && grad_norm > 1.0 {
            for grad in grads.values_mut() {
                *grad = grad.scale(1.0 / grad_norm)?;
            }
        }

        self.opt.step(&mut self.model.store, &grads, lr)?;
        self.global_step += 1;
        Ok(LogRow {
            epoch: self.epoch,
            step,
            lr,
            loss,
            grad_norm,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
        })
    }
}
