//! Sinusoidal initial conditions.
//!
//! Every generated trajectory starts from a superposition of integer-mode
//! sine waves on a periodic domain of length `L`. The family is closed under
//! translation (advection solutions stay exact) and has a closed-form
//! antiderivative (finite-volume cell averages and the viscous-equation
//! quadrature oracle both integrate it exactly).

use serde::{Deserialize, Serialize};

use crate::rng::Rng;

pub const TWO_PI: f64 = std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub amplitude: f64,
    pub wavenumber: u32,
    pub phase: f64,
}

/// u0(x) = Σ A_i · sin(2π n_i x / L + φ_i), periodic with period L.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinusoidalIc {
    pub modes: Vec<Mode>,
    pub length: f64,
}

impl SinusoidalIc {
    /// Exact pointwise evaluation at any real x, grid-free.
    pub fn eval(&self, x: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| m.amplitude * (TWO_PI * m.wavenumber as f64 * x / self.length + m.phase).sin())
            .sum()
    }

    /// F(x) with F' = u0: Σ −A_i L cos(2π n_i x / L + φ_i) / (2π n_i).
    pub fn antiderivative(&self, x: f64) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let k = TWO_PI * m.wavenumber as f64 / self.length;
                -m.amplitude * (k * x + m.phase).cos() / k
            })
            .sum()
    }

    /// Exact average of u0 over [a, b], the finite-volume projection.
    pub fn cell_average(&self, a: f64, b: f64) -> f64 {
        (self.antiderivative(b) - self.antiderivative(a)) / (b - a)
    }

    /// Upper bound on |u0| anywhere (triangle inequality), used for CFL
    /// budgeting before the solution exists.
    pub fn amplitude_bound(&self) -> f64 {
        self.modes.iter().map(|m| m.amplitude.abs()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IcConfig {
    /// Number of superposed modes.
    pub j_modes: usize,
    /// Wavenumbers are drawn uniformly from 1..=max_mode.
    pub max_mode: u32,
    /// Amplitudes drawn uniformly from [lo, hi].
    pub amp_range: [f64; 2],
    /// Domain period.
    pub length: f64,
}

impl Default for IcConfig {
    fn default() -> Self {
        IcConfig { j_modes: 5, max_mode: 8, amp_range: [-0.5, 0.5], length: 1.0 }
    }
}

/// Draws one IC; amplitude, wavenumber, phase per mode, in that order, so
/// the stream layout is stable.
pub fn sample_ic(rng: &mut Rng, cfg: &IcConfig) -> SinusoidalIc {
    let modes = (0..cfg.j_modes)
        .map(|_| {
            let amplitude = rng.uniform(cfg.amp_range[0], cfg.amp_range[1]);
            let wavenumber = 1 + rng.below(cfg.max_mode as usize) as u32;
            let phase = rng.uniform(0.0, TWO_PI);
            Mode { amplitude, wavenumber, phase }
        })
        .collect();
    SinusoidalIc { modes, length: cfg.length }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_ic() {
        let cfg = IcConfig::default();
        let a = sample_ic(&mut Rng::new(0, 0), &cfg);
        let b = sample_ic(&mut Rng::new(0, 0), &cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn single_unit_mode() {
        let cfg = IcConfig { j_modes: 1, max_mode: 1, amp_range: [1.0, 1.0], length: 1.0 };
        let ic = sample_ic(&mut Rng::new(3, 0), &cfg);
        assert_eq!(ic.modes.len(), 1);
        let m = ic.modes[0];
        assert_eq!((m.amplitude, m.wavenumber), (1.0, 1));
        for i in 0..7 {
            let x = i as f64 / 7.0;
            assert!((ic.eval(x) - (TWO_PI * x + m.phase).sin()).abs() < 1e-15);
        }
    }

    #[test]
    fn periodic_mean_vanishes() {
        let cfg = IcConfig::default();
        let ic = sample_ic(&mut Rng::new(9, 0), &cfg);
        let n = 4096;
        let mean: f64 = (0..n).map(|i| ic.eval(i as f64 / n as f64)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 1e-12, "mean {mean}");
    }

    #[test]
    fn antiderivative_differentiates_back() {
        let ic = sample_ic(&mut Rng::new(4, 0), &IcConfig::default());
        let h = 1e-6;
        for i in 0..9 {
            let x = 0.05 + 0.1 * i as f64;
            let fd = (ic.antiderivative(x + h) - ic.antiderivative(x - h)) / (2.0 * h);
            assert!((fd - ic.eval(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn cell_averages_integrate_to_zero() {
        let ic = sample_ic(&mut Rng::new(5, 0), &IcConfig::default());
        let s = 64;
        let dx = ic.length / s as f64;
        let total: f64 = (0..s)
            .map(|i| ic.cell_average(i as f64 * dx, (i + 1) as f64 * dx) * dx)
            .sum();
        assert!(total.abs() < 1e-14, "integral {total}");
    }
}
