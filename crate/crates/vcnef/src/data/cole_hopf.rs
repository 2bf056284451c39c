//! Independent reference for the viscous Burgers equation.
//!
//! The Cole–Hopf substitution turns ∂u/∂t + u∂u/∂x = ν̃∂²u/∂x² into the heat
//! equation, giving the closed solution
//!
//!   u(x, t) = ∫ (x−y)/t · e^(−G/2ν̃) dy ÷ ∫ e^(−G/2ν̃) dy,
//!   G(x, y) = Ψ(y) + (x−y)²/(2t),  Ψ(y) = ∫₀^y u0(η) dη.
//!
//! Ψ is exact for the sinusoidal family, the integrals are done by composite
//! Simpson quadrature over a window wide enough that the Gaussian tail is
//! below roundoff, and the exponentials are shifted by min G so nothing
//! overflows. The result shares no code path with the finite-volume solver,
//! which is the point: the two agree only if both are right.

use super::ic::SinusoidalIc;
use super::DataError;

/// Pointwise u(x, t) at each x for the diffusion coefficient ν/π.
pub fn cole_hopf_reference(
    ic: &SinusoidalIc,
    nu: f64,
    xs: &[f64],
    t: f64,
    n_panels: usize,
) -> Result<Vec<f64>, DataError> {
    if t <= 0.0 {
        return Err(DataError::Invalid { what: format!("quadrature needs t > 0, got {t}") });
    }
    let nu_t = nu / std::f64::consts::PI;
    if nu_t <= 0.0 {
        return Err(DataError::Invalid { what: format!("quadrature needs ν > 0, got {nu}") });
    }
    let n = n_panels.max(2) + n_panels % 2;

    // Window half-width: (W²/2t − ΔΨ)/2ν̃ ≥ 40 keeps the discarded tail
    // below e⁻⁴⁰ of the peak weight.
    let psi_span: f64 = ic
        .modes
        .iter()
        .map(|m| {
             2.0 * m.amplitude.abs() * ic.length
                / (super::ic::TWO_PI * m.wavenumber as f64)
        })
        .sum();
    let w = (2.0 * t * (80.0 * nu_t + psi_span)).sqrt().max(ic.length);

    let f0 = ic.antiderivative(0.0);
    let psi = |y: f64| ic.antiderivative(y) - f0;
    let h = 2.0 * w / n as f64;

    let mut out = Vec::with_capacity(xs.len());
    let mut g = vec![0.0; n + 1];
    for &x in xs {
        for (i, gi) in g.iter_mut().enumerate() {
            let y = x - w + i as f64 * h;
            *gi = psi(y) + (x - y) * (x - y) / (2.0 * t);
        }
        let g_min = g.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        let mut numer = 0.0;
        let mut denom = 0.0;
        for (i, &gi) in g.iter().enumerate() {
            let simpson = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let weight = simpson * (-(gi - g_min) / (2.0 * nu_t)).exp();
            let y = x - w + i as f64 * h;
            numer += weight * (x - y) / t;
            denom += weight;
        }
        out.push(numer / denom);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::burgers::{solve_burgers, stable_dt, FvGrid};
    use super::super::ic::{Mode, SinusoidalIc};
    use super::*;

    fn single_mode(amplitude: f64) -> SinusoidalIc {
        SinusoidalIc {
            modes: vec![Mode { amplitude, wavenumber: 1, phase: 0.0 }],
            length: 2.0,
        }
    }

    #[test]
    fn quadrature_resolution_converged() {
        let ic = single_mode(0.5);
        let xs: Vec<f64> = (0..16).map(|i| -1.0 + i as f64 / 8.0).collect();
        let coarse = cole_hopf_reference(&ic, 0.1, &xs, 0.5, 4000).unwrap();
        let fine = cole_hopf_reference(&ic, 0.1, &xs, 0.5, 20000).unwrap();
        for (a, b) in coarse.iter().zip(&fine) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn small_amplitude_decays_like_heat_equation() {
        // At amplitude 1e-3 the nonlinear term is ~1e-5 of the field; the
        // solution is the linearly decayed sine to that accuracy.
        let amp = 1e-3;
        let ic = single_mode(amp);
        let nu = 0.1;
        let nu_t = nu / std::f64::consts::PI;
        let k = super::super::ic::TWO_PI / 2.0;
        let t = 0.5;
        let xs: Vec<f64> = (0..64).map(|i| -1.0 + i as f64 / 32.0).collect();
        let got = cole_hopf_reference(&ic, nu, &xs, t, 8000).unwrap();
        let decay = (-nu_t * k * k * t).exp();
        let rms = (xs
            .iter()
            .zip(&got)
            .map(|(&x, &u)| {
                let linear = amp * decay * (k * x).sin();
                (u - linear) * (u - linear)
            })
            .sum::<f64>()
            / xs.len() as f64)
            .sqrt();
        assert!(rms < 3e-5, "rms {rms:.2e}");
    }

    #[test]
    fn finite_volume_agrees_at_moderate_resolution() {
        let ic = single_mode(0.5);
        let nu = 0.1;
        let grid = FvGrid { s: 128, length: 2.0, offset: -1.0 };
        let t = 0.25;
        let dt = stable_dt(t, grid.dx(), ic.amplitude_bound(), nu);
        let fv = solve_burgers(&ic, nu, &grid, dt, &[0.0, t]).unwrap();
        let centers = grid.centers();
        let oracle = cole_hopf_reference(&ic, nu, &centers, t, 8000).unwrap();
        let rms = (fv.data()[128..]
            .iter()
            .zip(&oracle)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<f64>()
            / 128.0)
            .sqrt();
        assert!(rms < 5e-3, "rms {rms:.2e}");
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let ic = single_mode(0.5);
        assert!(cole_hopf_reference(&ic, 0.1, &[0.0], 0.0, 100).is_err());
        assert!(cole_hopf_reference(&ic, 0.0, &[0.0], 0.5, 100).is_err());
    }
}
