//! Times the two rollout modes and tracks their peak heap use.
//!
//! Parallel mode answers every query time in one graph, so work and
//! intermediates grow with the number of steps. Sequential mode encodes
//! once, then decodes times one by one against the cached latent; it
//! walks the same arithmetic (the outputs match bit for bit) but holds
//! only one step's intermediates at a time, so its footprint stays flat
//! as rollouts lengthen.
//!
//! ```bash
//! cargo run --release --example rollout_modes
//! ```

use vcnef::alloc_track::TrackingAlloc;
use vcnef::array::Array;
use vcnef::eval::bench::{bench_rollout, RolloutMode};
use vcnef::model::forward::{GridSpec, Model};
use vcnef::model::ModelConfig;
use vcnef::rng::Rng;

#[global_allocator]
static ALLOC: TrackingAlloc = TrackingAlloc;

fn main() {
    let model = Model::<f32>::new(ModelConfig {
        d: 32,
        heads: 2,
        n_enc: 1,
        n_mod: 2,
        ..ModelConfig::default()
    })
    .unwrap();

    let s = 64;
    let xs: Vec<f64> = (0..s).map(|i| i as f64 / s as f64).collect();
    let grid = GridSpec::line(xs);
    let mut rng = Rng::new(0, 0);
    let u0 = Array::from_vec(
        vec![s, 1],
        (0..s).map(|_| rng.uniform(-1.0, 1.0) as f32).collect(),
    )
    .unwrap();

    let steps = [40usize, 80, 120, 160, 200, 240];
    let modes = [RolloutMode::Parallel, RolloutMode::Sequential];
    let records = bench_rollout(&model, &grid, &u0, &[0.4], &steps, &modes).unwrap();

    println!("{:>10} {:>8} {:>12} {:>12}", "mode", "steps", "median ms", "peak MiB");
    for r in &records {
        println!(
            "{:>10} {:>8} {:>12.2} {:>12.2}",
            r.mode,
            r.n_steps,
            r.wall_ms,
            r.peak_bytes as f64 / (1024.0 * 1024.0)
        );
    }

    let peak = |mode: &str, n: usize| {
        records
            .iter()
            .find(|r| r.mode == mode && r.n_steps == n)
            .map(|r| r.peak_bytes as f64)
            .unwrap()
    };
    let first = steps[0];
    let last = *steps.last().unwrap();
    println!(
        "\npeak growth {}→{} steps: parallel {:.2}x, sequential {:.2}x",
        first,
        last,
        peak("parallel", last) / peak("parallel", first),
        peak("sequential", last) / peak("sequential", first)
    );
    println!("A 6x longer rollout costs parallel mode 6x the memory and the");
    println!("sequential walker roughly none, which is what makes long rollouts");
    println!("on big grids feasible at all.");
}
