//! Shows the two schedules that shape a training run: the one-cycle
//! learning rate and the per-epoch starting-frame draw.
//!
//! The learning rate warms up over the first fifth of the run and decays
//! for the rest, both along cosine arcs. Starting frames decide which
//! frame conditions the model each step: frame 0 always appears, then up
//! to ten distinct interior frames drawn fresh per epoch, so later frames
//! get conditioned on too and rollouts can begin anywhere. Query times
//! are renormalized against the remaining horizon, so a late start still
//! spans the full unit interval.
//!
//! ```bash
//! cargo run --release --example training_schedules
//! ```

use vcnef::model::checkpoint::TimeConvention;
use vcnef::rng::Rng;
use vcnef::train::{one_cycle_lr, query_times, starting_point_schedule};

fn main() {
    let total = 1000u64;
    let max_lr = 1e-3;
    println!("one-cycle schedule, {total} steps, peak {max_lr:.0e}");
    for step in [0u64, 100, 200, 400, 600, 800, 999] {
        let lr = one_cycle_lr(step, total, max_lr);
        let bar = "#".repeat((lr / max_lr * 50.0).round() as usize);
        println!("  step {step:4}  {lr:.3e}  {bar}");
    }

    let n_t = 41;
    let mut rng = Rng::new(0, 0);
    println!("\nstarting frames for three epochs, {n_t} frames per trajectory");
    for epoch in 0..3 {
        let starts = starting_point_schedule(n_t, &mut rng);
        println!("  epoch {epoch}: {starts:?}");
    }

    // Across many epochs every interior frame should be drawn about
    // equally often; a visible histogram makes a skew easy to spot.
    let epochs = 2000;
    let mut counts = vec![0usize; n_t];
    for _ in 0..epochs {
        for &s in &starting_point_schedule(n_t, &mut rng)[1..] {
            counts[s] += 1;
        }
    }
    let expected = (epochs * 10) as f64 / (n_t - 2) as f64;
    println!("\ninterior draw counts over {epochs} epochs (expected {expected:.0} each)");
    for lo in (1..n_t - 1).step_by(13) {
        let hi = (lo + 13).min(n_t - 1);
        let row: Vec<String> = (lo..hi).map(|f| format!("{:3}:{:4}", f, counts[f])).collect();
        println!("  {}", row.join("  "));
    }
    let (min, max) = counts[1..n_t - 1]
        .iter()
        .fold((usize::MAX, 0), |(lo, hi), &c| (lo.min(c), hi.max(c)));
    println!("  spread {min}..{max} around {expected:.0}");

    // A start at frame 30 of 41 leaves 10 frames of horizon; relative
    // convention stretches those across (0, 1] so the model always sees
    // the same query range.
    let times: Vec<f64> = (0..n_t).map(|k| k as f64 * 0.05).collect();
    let targets: Vec<usize> = vec![31, 35, 40];
    let q = query_times(&times, 30, &targets, TimeConvention::Relative);
    println!("\nstart at frame 30, targets {targets:?}");
    println!("  physical times {:?}", targets.iter().map(|&k| times[k]).collect::<Vec<_>>());
    println!("  query times    {q:?}");
}
