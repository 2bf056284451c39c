//! Rollout timing: parallel (all query times in one pass) versus
//! sequential (one time per pass), with wall time and peak heap usage.
//!
//! Peak numbers require the tracking allocator from [`crate::alloc_track`]
//! to be installed in the running binary; without it they report zero.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::alloc_track;
use crate::array::{Array, Scalar};
use crate::model::forward::{BatchItem, GridSpec, Model};
use super::EvalError;

/// Step counts benchmarked by default.
pub const DEFAULT_BENCH_STEPS: [usize; 6] = [40, 80, 120, 160, 200, 240];

const WARMUP_RUNS: usize = 3;
const MEASURED_RUNS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutMode {
    Parallel,
    Sequential,
}

impl RolloutMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RolloutMode::Parallel => "parallel",
            RolloutMode::Sequential => "sequential",
        }
    }
}

impl std::str::FromStr for RolloutMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "parallel" => Ok(RolloutMode::Parallel),
            "sequential" => Ok(RolloutMode::Sequential),
            other => Err(format!("unknown rollout mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub mode: String,
    pub n_steps: usize,
    /// Median wall time over the measured runs.
    pub wall_ms: f64,
    /// Largest heap high-water mark seen across the measured runs.
    pub peak_bytes: usize,
}

fn rollout<T: Scalar>(
    model: &Model<T>,
    grid: &GridSpec,
    item: BatchItem<T>,
    mode: RolloutMode,
) -> Result<Array<T>, EvalError> {
    match mode {
        RolloutMode::Parallel => Ok(model.forward(grid, item)?),
        RolloutMode::Sequential => Ok(model.forward_sequential(grid, item)?),
    }
}

/// Times the requested rollout modes at each step count. Before any clock
/// starts, both modes are run once and their outputs compared; the
/// benchmark aborts if they disagree, since timing a wrong answer is
/// meaningless.
pub fn bench_rollout<T: Scalar>(
    model: &Model<T>,
    grid: &GridSpec,
    u0: &Array<T>,
    p: &[f64],
    n_steps_list: &[usize],
    modes: &[RolloutMode],
) -> Result<Vec<TimingRecord>, EvalError> {
    let mut records = Vec::new();
    for &n_steps in n_steps_list {
        if n_steps == 0 {
            return Err(EvalError::Setup { what: "cannot benchmark zero steps".into() });
        }
        let times: Vec<f64> = (1..=n_steps).map(|k| k as f64 / n_steps as f64).collect();
        let item = BatchItem { u0, p, times: &times };

        let par = rollout(model, grid, item, RolloutMode::Parallel)?;
        let seq = rollout(model, grid, item, RolloutMode::Sequential)?;
        let max_diff = par
            .data()
            .iter()
            .zip(seq.data())
            .map(|(&a, &b)| (a.to_f64() - b.to_f64()).abs())
            .fold(0.0f64, f64::max);
        if max_diff >= 1e-6 {
            return Err(EvalError::Setup {
                what: format!(
                    "parallel and sequential rollouts disagree by {max_diff:.3e} at {n_steps} steps"
                ),
            });
        }

        for &mode in modes {
            for _ in 0..WARMUP_RUNS {
                rollout(model, grid, item, mode)?;
            }
            let mut walls = Vec::with_capacity(MEASURED_RUNS);
            let mut peak = 0usize;
            for _ in 0..MEASURED_RUNS {
                alloc_track::reset_peak();
                let clock = Instant::now();
                let out = rollout(model, grid, item, mode)?;
                walls.push(clock.elapsed().as_secs_f64() * 1e3);
                peak = peak.max(alloc_track::peak_bytes());
                drop(out);
            }
            walls.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
            records.push(TimingRecord {
                mode: mode.as_str().to_string(),
                n_steps,
                wall_ms: walls[MEASURED_RUNS / 2],
                peak_bytes: peak,
            });
        }
    }
    Ok(records)
}

/// Coefficient of determination of the least-squares line through the
/// points, for checking near-linear growth of measured series.
pub fn linear_fit_r2(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return 1.0;
    }
    (sxy * sxy) / (sxx * syy)
}
