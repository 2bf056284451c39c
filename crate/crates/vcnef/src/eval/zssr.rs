//! Zero-shot super-resolution protocols: querying a trained model on
//! finer spatial grids or denser time grids than it saw in training.

use crate::array::Scalar;
use crate::data::Dataset;
use crate::model::checkpoint::TimeConvention;
use crate::model::forward::{GridSpec, Model};
use super::report::EvalReport;
use super::{evaluate, predict_all, report_from_predictions, EvalError};

/// Evaluates on a dataset generated at a finer spatial resolution than the
/// model trained on. The model is queried with the fine grid coordinates
/// and the fine initial condition; nothing is retrained or interpolated.
pub fn eval_spatial_zssr<T: Scalar>(
    model: &Model<T>,
    fine: &Dataset<T>,
    train_res: usize,
    convention: TimeConvention,
    time_norm: f64,
) -> Result<EvalReport, EvalError> {
    let fine_res = fine.meta.s;
    if train_res == 0 || fine_res % train_res != 0 {
        return Err(EvalError::Setup {
            what: format!(
                "evaluation resolution {fine_res} must be a multiple of the training resolution {train_res}"
            ),
        });
    }
    if model.cfg.dim == 2 {
        let side = (fine_res as f64).sqrt().round() as usize;
        if side * side != fine_res || side % model.cfg.patch_large != 0 {
            return Err(EvalError::Setup {
                what: format!(
                    "a {fine_res}-point plane does not tile into {0}x{0} patches",
                    model.cfg.patch_large
                ),
            });
        }
    }
    let grid = GridSpec::line(fine.meta.unit_grid());
    evaluate(model, fine, &grid, convention, time_norm)
}

/// Dense-versus-coarse time-query comparison on one dataset.
pub struct TemporalZssr {
    /// Scored against every frame of the dense dataset.
    pub dense: EvalReport,
    /// Scored against the coarse subset of frames only.
    pub coarse: EvalReport,
    /// Largest |dense − coarse| prediction difference at shared times.
    pub max_shared_diff: f64,
}

/// Queries the model at every dense timestamp and at the coarse subset
/// (every `stride`-th frame), then compares predictions at the shared
/// times. The same input queried twice must produce the same value, so
/// any difference here exposes order dependence in the forward pass.
pub fn eval_temporal_zssr<T: Scalar>(
    model: &Model<T>,
    dense: &Dataset<T>,
    coarse_n_t: usize,
    convention: TimeConvention,
    time_norm: f64,
) -> Result<TemporalZssr, EvalError> {
    let n_t = dense.meta.n_t;
    if coarse_n_t < 2 || (n_t - 1) % (coarse_n_t - 1) != 0 {
        return Err(EvalError::Setup {
            what: format!(
                "{coarse_n_t} coarse frames do not embed evenly into {n_t} dense frames"
            ),
        });
    }
    let stride = (n_t - 1) / (coarse_n_t - 1);
    let dense_frames: Vec<usize> = (1..n_t).collect();
    let coarse_frames: Vec<usize> = (1..coarse_n_t).map(|k| k * stride).collect();
    let grid = GridSpec::line(dense.meta.unit_grid());

    let dense_preds = predict_all(model, dense, &grid, &dense_frames, convention, time_norm)?;
    let coarse_preds = predict_all(model, dense, &grid, &coarse_frames, convention, time_norm)?;

    let m = &dense.meta;
    let frame_len = m.s * m.c;
    let mut max_diff = 0.0f64;
    for i in 0..m.n {
        for (kc, &f) in coarse_frames.iter().enumerate() {
            let kd = f - 1;
            let d_base = (i * dense_frames.len() + kd) * frame_len;
            let c_base = (i * coarse_frames.len() + kc) * frame_len;
            for p in 0..frame_len {
                let d = dense_preds.data()[d_base + p].to_f64();
                let c = coarse_preds.data()[c_base + p].to_f64();
                max_diff = max_diff.max((d - c).abs());
            }
        }
    }

    Ok(TemporalZssr {
        dense: report_from_predictions(dense, &dense_frames, &dense_preds)?,
        coarse: report_from_predictions(dense, &coarse_frames, &coarse_preds)?,
        max_shared_diff: max_diff,
    })
}
