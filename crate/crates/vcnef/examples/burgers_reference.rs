//! Puts the Burgers solver through its three correctness gates:
//! conservation, self-convergence, and a closed-form reference.
//!
//! The finite-volume update moves each quantity through cell interfaces,
//! so the spatial integral of u must stay constant to roundoff. Halving
//! the grid spacing should shrink the error against a much finer run at
//! the scheme's second-order rate. And for one sine mode the exact
//! solution is available in integral form through the Cole–Hopf
//! transformation, computed here by quadrature with no shared code, so
//! agreement is evidence rather than tautology.
//!
//! ```bash
//! cargo run --release --example burgers_reference
//! ```

use vcnef::data::burgers::{restrict, solve_burgers, stable_dt, FvGrid};
use vcnef::data::cole_hopf::cole_hopf_reference;
use vcnef::data::ic::{Mode, SinusoidalIc};

const NU: f64 = 0.1;

fn single_mode() -> SinusoidalIc {
    SinusoidalIc {
        modes: vec![Mode { amplitude: 0.5, wavenumber: 1, phase: 0.0 }],
        length: 2.0,
    }
}

fn run(ic: &SinusoidalIc, s: usize, times: &[f64]) -> vcnef::array::Array<f64> {
    let grid = FvGrid { s, length: 2.0, offset: -1.0 };
    let dt = stable_dt(times[1] - times[0], grid.dx(), ic.amplitude_bound(), NU);
    solve_burgers(ic, NU, &grid, dt, times).unwrap()
}

fn main() {
    let ic = single_mode();
    let times: Vec<f64> = (0..6).map(|k| k as f64 * 0.2).collect();

    // Gate 1: the integral of u over the domain never changes.
    let s = 256;
    let sol = run(&ic, s, &times);
    let dx = 2.0 / s as f64;
    println!("conservation of ∫u dx");
    let mass0: f64 = sol.data()[..s].iter().sum::<f64>() * dx;
    let mut worst = 0.0f64;
    for k in 0..times.len() {
        let mass: f64 = sol.data()[k * s..(k + 1) * s].iter().sum::<f64>() * dx;
        worst = worst.max((mass - mass0).abs());
    }
    println!("  max drift over {} frames: {:.2e}", times.len(), worst);
    assert!(worst < 1e-12);

    // Gate 2: coarse runs converge to a fine run at second order. Each
    // resolution is compared after averaging the fine solution down.
    println!("\nself-convergence at t = 1.0");
    let t = [0.0, 1.0];
    let fine_s = 1024;
    let fine = run(&ic, fine_s, &t);
    let fine_last = &fine.data()[fine_s..];
    let mut prev_err: Option<f64> = None;
    for s in [64usize, 128, 256] {
        let sol = run(&ic, s, &t);
        let reference = restrict(fine_last, fine_s / s);
        let err = sol.data()[s..]
            .iter()
            .zip(&reference)
            .map(|(&a, &b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
            / (s as f64).sqrt();
        match prev_err {
            None => println!("  s = {s:4}: rms {err:.3e}"),
            Some(p) => {
                let order = (p / err).log2();
                println!("  s = {s:4}: rms {err:.3e}  order {order:.2}");
                assert!(order > 1.8);
            }
        }
        prev_err = Some(err);
    }

    // Gate 3: the quadrature solution of the transformed heat equation.
    println!("\nclosed-form reference at t = 1.0, s = 256");
    let s = 256;
    let sol = run(&ic, s, &t);
    let grid = FvGrid { s, length: 2.0, offset: -1.0 };
    let exact = cole_hopf_reference(&ic, NU, &grid.centers(), 1.0, 4000).unwrap();
    let rms = sol.data()[s..]
        .iter()
        .zip(&exact)
        .map(|(&a, &b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt()
        / (s as f64).sqrt();
    println!("  rms difference: {rms:.3e}");
    assert!(rms < 1e-3);
    println!("\nall three gates hold");
}
