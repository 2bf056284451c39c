//! Interrupts a training run, reloads it from disk, and shows the resumed
//! run is indistinguishable from one that never stopped.
//!
//! The state file carries everything the next step depends on: parameters
//! and optimizer moments at full precision, the RNG state, and the step
//! counters. Loading it therefore replays the exact shuffles, subsampled
//! targets, learning rates, and update arithmetic, so the loss sequence
//! and final parameters match the uninterrupted run bit for bit, not just
//! approximately.
//!
//! ```bash
//! cargo run --release --example resume_training
//! ```

use vcnef::data::{generate, DataConfig};
use vcnef::model::forward::{GridSpec, Model};
use vcnef::model::ModelConfig;
use vcnef::train::state::{load_train_state, save_train_state};
use vcnef::train::{TrainConfig, Trainer};

fn main() {
    let data = generate(&DataConfig {
        n: 16,
        s: 32,
        n_t: 6,
        t_final: 2.0,
        param_values: vec![0.4],
        seed: 0,
        ..DataConfig::default()
    })
    .unwrap()
    .cast::<f32>();
    let grid = GridSpec::line(data.meta.unit_grid());
    let horizon = *data.meta.times.last().unwrap();
    let model_cfg =
        ModelConfig { d: 16, heads: 2, n_enc: 1, n_mod: 1, ..ModelConfig::default() };
    let cfg = TrainConfig { epochs: 6, batch_size: 8, ..TrainConfig::default() };

    // Reference: all six epochs in one process.
    let mut straight =
        Trainer::new(Model::<f32>::new(model_cfg.clone()).unwrap(), cfg.clone(), horizon).unwrap();
    let mut straight_losses = Vec::new();
    for _ in 0..cfg.epochs {
        let r = straight.train_epoch(&data, &grid).unwrap();
        straight_losses.extend(r.rows.iter().map(|row| row.loss));
    }

    // Interrupted: three epochs, a save, a fresh load, three more.
    let path = std::env::temp_dir().join("vcnef_resume_example.vcnt");
    let mut chunked_losses = Vec::new();
    let mut first =
        Trainer::new(Model::<f32>::new(model_cfg).unwrap(), cfg.clone(), horizon).unwrap();
    for _ in 0..3 {
        let r = first.train_epoch(&data, &grid).unwrap();
        chunked_losses.extend(r.rows.iter().map(|row| row.loss));
    }
    save_train_state(&path, &first, None).unwrap();
    let bytes = std::fs::metadata(&path).unwrap().len();
    drop(first);
    println!("saved {} bytes of training state after 3 epochs", bytes);

    let mut resumed = load_train_state::<f32>(&path).unwrap();
    for _ in 0..3 {
        let r = resumed.train_epoch(&data, &grid).unwrap();
        chunked_losses.extend(r.rows.iter().map(|row| row.loss));
    }

    println!("\n{:>6} {:>14} {:>14}", "step", "straight", "resumed");
    let stride = straight_losses.len() / 8;
    for i in (0..straight_losses.len()).step_by(stride.max(1)) {
        println!("{:>6} {:>14.6e} {:>14.6e}", i, straight_losses[i], chunked_losses[i]);
    }

    assert_eq!(straight_losses.len(), chunked_losses.len());
    let exact = straight_losses
        .iter()
        .zip(&chunked_losses)
        .all(|(a, b)| a.to_bits() == b.to_bits());
    println!("\nloss sequences bit-identical: {exact}");
    assert!(exact);

    for (name, p) in straight.model.store.iter() {
        let q = resumed.model.store.get(name).unwrap();
        let same = p
            .value
            .data()
            .iter()
            .zip(q.data())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(same, "parameter {name} diverged");
    }
    println!("final parameters bit-identical across every tensor");
}
