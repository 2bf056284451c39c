//! Model evaluation: trajectory prediction, error reports, baselines,
//! super-resolution protocols, and rollout benchmarks.
//!
//! Prediction and scoring are split so a report can always be recomputed
//! from saved predictions: [`predict_all`] produces the model outputs for
//! a dataset, [`report_from_predictions`] turns any such stack into an
//! [`EvalReport`], and [`evaluate`] is the composition.

pub mod baseline;
pub mod bench;
pub mod metrics;
pub mod report;
pub mod zssr;

use rayon::prelude::*;
use thiserror::Error;

use crate::array::{Array, ArrayError, Scalar};
use crate::data::{DataError, Dataset};
use crate::model::checkpoint::TimeConvention;
use crate::model::forward::{BatchItem, GridSpec, Model};
use report::{EvalReport, TemporalPoint};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation setup: {what}")]
    Setup { what: String },
    #[error(transparent)]
    Array(#[from] ArrayError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn check_compat<T: Scalar>(
    model: &Model<T>,
    data: &Dataset<T>,
    grid: &GridSpec,
    frames: &[usize],
) -> Result<(), EvalError> {
    data.validate()?;
    let m = &data.meta;
    let setup = |what: String| Err(EvalError::Setup { what });
    if m.c != model.cfg.c {
        return setup(format!("dataset has {} channels, model expects {}", m.c, model.cfg.c));
    }
    if m.params[0].len() != model.cfg.j {
        return setup(format!(
            "dataset has {} parameters per sample, model expects {}",
            m.params[0].len(),
            model.cfg.j
        ));
    }
    if grid.n_points() != m.s {
        return setup(format!("grid has {} points, dataset frames have {}", grid.n_points(), m.s));
    }
    if frames.is_empty() {
        return setup("no frames selected for evaluation".into());
    }
    if frames.windows(2).any(|w| w[1] <= w[0]) || frames[0] == 0 || frames[frames.len() - 1] >= m.n_t
    {
        return setup(format!(
            "evaluation frames {frames:?} must be strictly increasing within 1..{}",
            m.n_t
        ));
    }
    Ok(())
}

/// Query times for the selected frames, mapped into the model's unit
/// interval using the horizon the model was trained with.
pub fn eval_query_times(
    times: &[f64],
    frames: &[usize],
    convention: TimeConvention,
    time_norm: f64,
) -> Vec<f64> {
    let t0 = times[0];
    match convention {
        TimeConvention::Relative => {
            frames.iter().map(|&k| (times[k] - t0) / (time_norm - t0)).collect()
        }
        TimeConvention::Absolute => frames.iter().map(|&k| times[k] / time_norm).collect(),
    }
}

/// Predicts the selected frames of every trajectory by conditioning on
/// frame 0; returns [n, n_frames, s, c]. Samples run in parallel.
pub fn predict_all<T: Scalar>(
    model: &Model<T>,
    data: &Dataset<T>,
    grid: &GridSpec,
    frames: &[usize],
    convention: TimeConvention,
    time_norm: f64,
) -> Result<Array<T>, EvalError> {
    check_compat(model, data, grid, frames)?;
    let m = &data.meta;
    let times = eval_query_times(&m.times, frames, convention, time_norm);

    let per_sample: Vec<Result<Array<T>, ArrayError>> = (0..m.n)
        .into_par_iter()
        .map(|i| {
            let u0 = data.frame(i, 0);
            let item = BatchItem { u0: &u0, p: data.params(i), times: &times };
            model.forward(grid, item)
        })
        .collect();

    let mut out = Vec::with_capacity(m.n * frames.len() * m.s * m.c);
    for pred in per_sample {
        out.extend_from_slice(pred?.data());
    }
    Ok(Array::from_vec(vec![m.n, frames.len(), m.s, m.c], out)?)
}

/// Ground-truth stack for the same frame selection, [n, n_frames, s, c].
pub fn truth_stack<T: Scalar>(data: &Dataset<T>, frames: &[usize]) -> Array<T> {
    let m = &data.meta;
    let frame_len = m.s * m.c;
    let block = m.n_t * frame_len;
    let mut out = Vec::with_capacity(m.n * frames.len() * frame_len);
    for i in 0..m.n {
        for &k in frames {
            let base = i * block + k * frame_len;
            out.extend_from_slice(&data.values.data()[base..base + frame_len]);
        }
    }
    Array::from_vec(vec![m.n, frames.len(), m.s, m.c], out).expect("validated dataset")
}

/// Scores a prediction stack against the dataset's ground truth.
pub fn report_from_predictions<T: Scalar>(
    data: &Dataset<T>,
    frames: &[usize],
    predictions: &Array<T>,
) -> Result<EvalReport, EvalError> {
    let m = &data.meta;
    let k = frames.len();
    if predictions.shape() != [m.n, k, m.s, m.c] {
        return Err(EvalError::Setup {
            what: format!(
                "predictions shaped {:?}, expected [{}, {}, {}, {}]",
                predictions.shape(),
                m.n,
                k,
                m.s,
                m.c
            ),
        });
    }
    let frame_len = m.s * m.c;
    let sample_len = k * frame_len;

    let mut per_nrmse = Vec::with_capacity(m.n);
    let mut per_brmse = Vec::with_capacity(m.n);
    let mut skipped = 0usize;
    let mut temporal_terms: Vec<Vec<f64>> = vec![Vec::with_capacity(m.n); k];
    let mut heat_sum = vec![0.0f64; k * m.s];
    let mut heat_count = vec![0usize; k * m.s];

    for i in 0..m.n {
        let truth = single_sample(data, frames, i);
        let pred = Array::from_vec(
            vec![k, m.s, m.c],
            predictions.data()[i * sample_len..(i + 1) * sample_len].to_vec(),
        )?;

        let n = metrics::nrmse(&truth, &pred)?;
        skipped += n.skipped;
        per_nrmse.push(n.value);
        per_brmse.push(metrics::brmse(&truth, &pred)?);

        let terms = metrics::nrmse_terms(&truth, &pred);
        for (kk, row) in terms.iter().enumerate() {
            let finite: Vec<f64> = row.iter().copied().filter(|v| !v.is_nan()).collect();
            if !finite.is_empty() {
                temporal_terms[kk].push(finite.iter().sum::<f64>() / finite.len() as f64);
            }
        }

        if m.c == 1 {
            let h = metrics::error_heatmap(&truth, &pred)?;
            for (idx, &v) in h.cells.iter().enumerate() {
                if !v.is_nan() {
                    heat_sum[idx] += v;
                    heat_count[idx] += 1;
                }
            }
        }
    }

    let temporal = frames
        .iter()
        .zip(&temporal_terms)
        .map(|(&f, terms)| {
            let (mean, std) = report::mean_std(terms);
            TemporalPoint { t: m.times[f], mean, std }
        })
        .collect();

    let heatmap = if m.c == 1 {
        let cells = heat_sum
            .iter()
            .zip(&heat_count)
            .map(|(&s, &c)| if c == 0 { f64::NAN } else { s / c as f64 })
            .collect();
        Some(metrics::Heatmap { n_t: k, s: m.s, cells })
    } else {
        None
    };

    let eval_times = frames.iter().map(|&f| m.times[f]).collect();
    Ok(EvalReport::from_samples(eval_times, per_nrmse, per_brmse, skipped, temporal, heatmap))
}

/// One trajectory's ground truth for the selected frames, [n_frames, s, c].
pub fn single_sample<T: Scalar>(data: &Dataset<T>, frames: &[usize], i: usize) -> Array<T> {
    let m = &data.meta;
    let frame_len = m.s * m.c;
    let block = m.n_t * frame_len;
    let mut out = Vec::with_capacity(frames.len() * frame_len);
    for &k in frames {
        let base = i * block + k * frame_len;
        out.extend_from_slice(&data.values.data()[base..base + frame_len]);
    }
    Array::from_vec(vec![frames.len(), m.s, m.c], out).expect("validated dataset")
}

/// Full-protocol evaluation: condition on frame 0, predict every later
/// frame, score against ground truth.
pub fn evaluate<T: Scalar>(
    model: &Model<T>,
    data: &Dataset<T>,
    grid: &GridSpec,
    convention: TimeConvention,
    time_norm: f64,
) -> Result<EvalReport, EvalError> {
    let frames: Vec<usize> = (1..data.meta.n_t).collect();
    let preds = predict_all(model, data, grid, &frames, convention, time_norm)?;
    report_from_predictions(data, &frames, &preds)
}
