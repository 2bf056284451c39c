//! Generates small advection and Burgers datasets, prints their layout,
//! and round-trips one through the on-disk format.
//!
//! Trajectories are solved in float64 and stored as float32. Each sample
//! draws its initial condition from an independent RNG stream, so the same
//! seed always reproduces the same trajectories, one by one or in bulk.
//!
//! ```bash
//! cargo run --release --example generate_data
//! ```

use vcnef::data::format::{read_dataset, write_dataset};
use vcnef::data::{generate, DataConfig};

fn main() {
    let adv = generate(&DataConfig {
        pde: "advection".into(),
        n: 8,
        s: 64,
        n_t: 21,
        t_final: 2.0,
        param_values: vec![0.2, 0.4],
        seed: 0,
        ..DataConfig::default()
    })
    .unwrap();

    let m = &adv.meta;
    println!("advection dataset");
    println!("  samples        {}", m.n);
    println!("  frames         {} over t ∈ [0, {}]", m.n_t, m.times.last().unwrap());
    println!("  grid           {} points, dx = {:.5}", m.s, m.dx);
    println!("  domain         offset {} length {}", m.domain.offset, m.domain.length);
    for i in 0..4 {
        let u0 = adv.frame(i, 0);
        println!(
            "  sample {i}: β = {}, max|u0| = {:.4}",
            adv.params(i)[0],
            u0.max_abs()
        );
    }

    // Transport with periodic wrap moves the profile without changing it,
    // so the extremes of every frame stay within the extremes of frame 0.
    let u0_amp = adv.frame(0, 0).max_abs();
    let last_amp = adv.frame(0, m.n_t - 1).max_abs();
    println!("  amplitude frame 0 → frame {}: {:.4} → {:.4}", m.n_t - 1, u0_amp, last_amp);

    let burgers = generate(&DataConfig {
        pde: "burgers".into(),
        n: 2,
        s: 128,
        n_t: 11,
        t_final: 1.0,
        param_values: vec![0.1],
        seed: 0,
        ..DataConfig::default()
    })
    .unwrap();
    let b = &burgers.meta;
    println!("\nburgers dataset");
    println!("  samples        {}", b.n);
    println!("  grid           {} cells on ({}, {})", b.s, b.domain.offset, b.domain.offset + b.domain.length);
    println!("  ν              {}", burgers.params(0)[0]);
    println!(
        "  dissipation    max|u| {:.4} → {:.4}",
        burgers.frame(0, 0).max_abs(),
        burgers.frame(0, b.n_t - 1).max_abs()
    );

    let dir = std::env::temp_dir().join("vcnef_generate_data");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("dataset.vcnf");
    write_dataset(&adv, &path).unwrap();
    let back = read_dataset(&path).unwrap();
    let stored = std::fs::metadata(&path).unwrap().len();
    println!("\nround trip through {}", path.display());
    println!("  {} bytes, {} values as float32", stored, back.values.numel());
    assert_eq!(back.meta.times, adv.meta.times);

    // Storage is float32, so reading back matches the float64 original to
    // single precision.
    let worst = adv
        .values
        .data()
        .iter()
        .zip(back.values.data())
        .map(|(&a, &b)| (a - b as f64).abs())
        .fold(0.0f64, f64::max);
    println!("  max |f64 − f32| = {worst:.3e}");
    assert!(worst < 1e-6);
}
