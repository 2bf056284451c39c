//! Viscous Burgers equation on a periodic domain.
//!
//! ∂u/∂t + ∂(u²/2)/∂x = (ν/π) ∂²u/∂x², advanced as cell averages by a
//! second-order finite-volume scheme: monotonized-central slope
//! reconstruction, Rusanov (local Lax–Friedrichs) interface flux, the
//! diffusion term as a central gradient in flux form, and two-stage
//! strong-stability-preserving Runge–Kutta in time. Everything the state
//! gains at one interface it loses at the other, so ∫u dx is conserved to
//! roundoff — the cheapest honest check that the scheme is what it claims.

use crate::array::Array;

use super::ic::SinusoidalIc;
use super::{check_times, DataError};

/// Uniform periodic cell grid over [offset, offset + length).
#[derive(Debug, Clone, Copy)]
pub struct FvGrid {
    pub s: usize,
    pub length: f64,
    pub offset: f64,
}

impl FvGrid {
    pub fn dx(&self) -> f64 {
        self.length / self.s as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        let dx = self.dx();
        (0..self.s).map(|i| self.offset + (i as f64 + 0.5) * dx).collect()
    }
}

/// Advective stability bound: dt ≤ 0.4·Δx/max|u|.
pub fn advective_dt_limit(dx: f64, u_max: f64) -> f64 {
    if u_max == 0.0 {
        f64::INFINITY
    } else {
        0.4 * dx / u_max
    }
}

/// Diffusive stability bound: dt ≤ 0.4·Δx²·π/(2ν) for diffusivity ν/π.
pub fn diffusive_dt_limit(dx: f64, nu: f64) -> f64 {
    if nu == 0.0 {
        f64::INFINITY
    } else {
        0.4 * dx * dx * std::f64::consts::PI / (2.0 * nu)
    }
}

/// Largest step obeying both limits that divides the frame spacing into a
/// whole number of solver steps.
pub fn stable_dt(frame: f64, dx: f64, u_bound: f64, nu: f64) -> f64 {
    let limit = advective_dt_limit(dx, u_bound).min(diffusive_dt_limit(dx, nu));
    let mut m = (frame / limit).ceil().max(1.0) as u64;
    if frame / m as f64 > limit {
        m += 1;
    }
    frame / m as f64
}

/// Returns [N_t, s, 1] cell averages. Frame 0 is the exact finite-volume
/// projection of the IC.
pub fn solve_burgers(
    ic: &SinusoidalIc,
    nu: f64,
    grid: &FvGrid,
    dt: f64,
    times: &[f64],
) -> Result<Array<f64>, DataError> {
    check_times(times)?;
    let s = grid.s;
    let dx = grid.dx();
    let mut u: Vec<f64> = (0..s)
        .map(|i| {
            let a = grid.offset + i as f64 * dx;
            ic.cell_average(a, a + dx)
        })
        .collect();

    let u_max = u.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let adv = advective_dt_limit(dx, u_max);
    if dt > adv {
        return Err(DataError::Cfl { bound: "advective CFL", dt, limit: adv });
    }
    let diff = diffusive_dt_limit(dx, nu);
    if dt > diff {
        return Err(DataError::Cfl { bound: "diffusive", dt, limit: diff });
    }
    let steps = steps_per_interval(times, dt)?;

    let nu_t = nu / std::f64::consts::PI;
    let mut data = Vec::with_capacity(times.len() * s);
    data.extend_from_slice(&u);
    let mut stage = vec![0.0; s];
    let mut rhs = vec![0.0; s];
    for &n in &steps {
        for _ in 0..n {
            flux_divergence(&u, dx, nu_t, &mut rhs);
            for i in 0..s {
                stage[i] = u[i] + dt * rhs[i];
            }
            flux_divergence(&stage, dx, nu_t, &mut rhs);
            for i in 0..s {
                u[i] = 0.5 * (u[i] + stage[i] + dt * rhs[i]);
            }
        }
        data.extend_from_slice(&u);
    }
    Ok(Array::from_vec(vec![times.len(), s, 1], data)?)
}

fn steps_per_interval(times: &[f64], dt: f64) -> Result<Vec<u64>, DataError> {
    times
        .windows(2)
        .map(|w| {
            let interval = w[1] - w[0];
            let ratio = interval / dt;
            let n = ratio.round();
            if (ratio - n).abs() > 1e-6 * ratio.max(1.0) || n < 1.0 {
                Err(DataError::Misaligned { t: w[1], dt })
            } else {
                Ok(n as u64)
            }
        })
        .collect()
}

/// du/dt as a pure difference of interface exchanges: h[i] holds the total
/// signed transport across interface i+1/2.
fn flux_divergence(u: &[f64], dx: f64, nu_t: f64, out: &mut [f64]) {
    let s = u.len();
    let mut h = vec![0.0; s];
    let mut slope = vec![0.0; s];
    for i in 0..s {
        let a = u[(i + 1) % s] - u[i];
        let b = u[i] - u[(i + s - 1) % s];
        slope[i] = monotonized_central(a, b);
    }
    for i in 0..s {
        let j = (i + 1) % s;
        let ul = u[i] + 0.5 * slope[i];
        let ur = u[j] - 0.5 * slope[j];
        let speed = ul.abs().max(ur.abs());
        let advective = 0.5 * (0.5 * ul * ul + 0.5 * ur * ur) - 0.5 * speed * (ur - ul);
        let diffusive = nu_t * (u[j] - u[i]) / dx;
        h[i] = -advective + diffusive;
    }
    for i in 0..s {
        out[i] = (h[i] - h[(i + s - 1) % s]) / dx;
    }
}

/// Slope limiter: minmod(2a, 2b, (a+b)/2), zero across sign changes.
fn monotonized_central(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else {
        let m = (2.0 * a.abs()).min(2.0 * b.abs()).min(0.5 * (a + b).abs());
        m * a.signum()
    }
}

/// Block average onto a grid `factor` times coarser; exact restriction
/// between nested finite-volume grids.
pub fn restrict(fine: &[f64], factor: usize) -> Vec<f64> {
    fine.chunks(factor)
        .map(|c| c.iter().sum::<f64>() / factor as f64)
        .collect()
}
