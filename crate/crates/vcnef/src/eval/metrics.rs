//! Error metrics over predicted trajectories, all accumulated in f64.
//!
//! Trajectories arrive as [n_t, s, c] stacks. Normalized metrics divide by
//! the ground-truth spatial norm per (time, channel) slice; slices whose
//! truth vanishes identically are excluded and counted rather than divided
//! through.

use crate::array::{Array, ArrayError, Result, Scalar};

fn check_pair<T: Scalar>(op: &'static str, truth: &Array<T>, pred: &Array<T>) -> Result<()> {
    if truth.shape() != pred.shape() {
        return Err(ArrayError::ShapeMismatch {
            op,
            lhs: format!("{:?}", truth.shape()),
            rhs: format!("{:?}", pred.shape()),
        });
    }
    if truth.shape().len() != 3 {
        return Err(ArrayError::RankMismatch {
            op,
            expected: 3,
            got: format!("{:?}", truth.shape()),
        });
    }
    Ok(())
}

/// Mean squared error over every element.
pub fn mse<T: Scalar>(truth: &Array<T>, pred: &Array<T>) -> Result<f64> {
    if truth.shape() != pred.shape() {
        return Err(ArrayError::ShapeMismatch {
            op: "mse",
            lhs: format!("{:?}", truth.shape()),
            rhs: format!("{:?}", pred.shape()),
        });
    }
    let sum: f64 = truth
        .data()
        .iter()
        .zip(pred.data())
        .map(|(&y, &yh)| {
            let d = y.to_f64() - yh.to_f64();
            d * d
        })
        .sum();
    Ok(sum / truth.data().len() as f64)
}

/// Normalized RMSE plus the number of zero-norm truth slices it skipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nrmse {
    pub value: f64,
    pub skipped: usize,
}

/// Mean over times and channels of the spatial-norm ratio
/// ‖truth − pred‖₂ / ‖truth‖₂, computed per (time, channel) slice.
pub fn nrmse<T: Scalar>(truth: &Array<T>, pred: &Array<T>) -> Result<Nrmse> {
    check_pair("nrmse", truth, pred)?;
    let terms = nrmse_terms(truth, pred);
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for row in &terms {
        for &v in row {
            if v.is_nan() {
                skipped += 1;
            } else {
                sum += v;
                used += 1;
            }
        }
    }
    let value = if used == 0 { f64::NAN } else { sum / used as f64 };
    Ok(Nrmse { value, skipped })
}

/// Per-(time, channel) norm ratios, NaN where the truth slice vanishes.
pub fn nrmse_terms<T: Scalar>(truth: &Array<T>, pred: &Array<T>) -> Vec<Vec<f64>> {
    let [n_t, s, c] = [truth.shape()[0], truth.shape()[1], truth.shape()[2]];
    let yt = truth.data();
    let yp = pred.data();
    let mut out = Vec::with_capacity(n_t);
    for k in 0..n_t {
        let mut row = Vec::with_capacity(c);
        for ch in 0..c {
            let mut err = 0.0;
            let mut norm = 0.0;
            for i in 0..s {
                let idx = (k * s + i) * c + ch;
                let y = yt[idx].to_f64();
                let d = y - yp[idx].to_f64();
                err += d * d;
                norm += y * y;
            }
            row.push(if norm == 0.0 { f64::NAN } else { (err / norm).sqrt() });
        }
        out.push(row);
    }
    out
}

/// Mean over times and channels of the RMS error at the two domain
/// boundary points.
pub fn brmse<T: Scalar>(truth: &Array<T>, pred: &Array<T>) -> Result<f64> {
    check_pair("brmse", truth, pred)?;
    let [n_t, s, c] = [truth.shape()[0], truth.shape()[1], truth.shape()[2]];
    if s < 2 {
        return Err(ArrayError::Invalid {
            op: "brmse",
            what: format!("needs at least 2 spatial points, got {s}"),
        });
    }
    let yt = truth.data();
    let yp = pred.data();
    let mut sum = 0.0;
    for k in 0..n_t {
        for ch in 0..c {
            let lo = (k * s) * c + ch;
            let hi = (k * s + s - 1) * c + ch;
            let e0 = yt[lo].to_f64() - yp[lo].to_f64();
            let e1 = yt[hi].to_f64() - yp[hi].to_f64();
            sum += ((e0 * e0 + e1 * e1) / 2.0).sqrt();
        }
    }
    Ok(sum / (n_t * c) as f64)
}

/// Relative-error grid over (time, point). Cells where the ground truth is
/// zero carry NaN so averages over samples can leave them out; the
/// sentinel is why this is not an [`Array`], which only admits finite
/// values.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub n_t: usize,
    pub s: usize,
    /// Row-major [n_t, s].
    pub cells: Vec<f64>,
}

impl Heatmap {
    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.cells[k * self.s + i]
    }
}

/// Pointwise relative error |y − ŷ| / |y| on a single-channel trajectory.
pub fn error_heatmap<T: Scalar>(truth: &Array<T>, pred: &Array<T>) -> Result<Heatmap> {
    check_pair("error_heatmap", truth, pred)?;
    let [n_t, s, c] = [truth.shape()[0], truth.shape()[1], truth.shape()[2]];
    if c != 1 {
        return Err(ArrayError::Invalid {
            op: "error_heatmap",
            what: format!("defined per channel; got {c} channels"),
        });
    }
    let cells = truth
        .data()
        .iter()
        .zip(pred.data())
        .map(|(&y, &yh)| {
            let y = y.to_f64();
            if y == 0.0 {
                f64::NAN
            } else {
                (y - yh.to_f64()).abs() / y.abs()
            }
        })
        .collect();
    Ok(Heatmap { n_t, s, cells })
}
