//! Linear advection on a periodic domain, solved exactly.
//!
//! ∂u/∂t + β ∂u/∂x = 0 translates the initial profile: u(t, x) = u0(x − βt).
//! For the sinusoidal family the translated profile is evaluated mode-wise,
//! so there is no spatial or temporal discretization error at all — these
//! trajectories are ground truth to machine precision.

use crate::array::Array;

use super::ic::SinusoidalIc;
use super::{check_times, DataError};

/// Returns [N_t, s, 1] point samples of u0(x − βt) on the given physical
/// grid.
pub fn solve_advection(
    ic: &SinusoidalIc,
    beta: f64,
    times: &[f64],
    grid: &[f64],
) -> Result<Array<f64>, DataError> {
    check_times(times)?;
    let s = grid.len();
    let mut data = Vec::with_capacity(times.len() * s);
    for &t in times {
        for &x in grid {
            data.push(ic.eval(x - beta * t));
        }
    }
    Ok(Array::from_vec(vec![times.len(), s, 1], data)?)
}
