//! Trains a small model on 1D advection and scores it against the
//! baselines every surrogate must beat.
//!
//! The run is sized for a desk check: 64 trajectories, a 32-point grid,
//! a narrow model, about a minute of wall time. The printed loss should
//! fall by two orders of magnitude, and the final test nRMSE should land
//! well under the persistence baseline (repeat the initial condition) and
//! the mean-predictor baseline (predict the training mean field).
//!
//! ```bash
//! cargo run --release --example train_advection
//! ```

use vcnef::data::{generate, DataConfig};
use vcnef::eval::baseline::{mean_frame, mean_predictions, persistence_predictions};
use vcnef::eval::{evaluate, report_from_predictions};
use vcnef::model::forward::{GridSpec, Model};
use vcnef::model::ModelConfig;
use vcnef::train::{TrainConfig, Trainer};

fn main() {
    let data_cfg = DataConfig {
        n: 64,
        s: 32,
        n_t: 11,
        t_final: 2.0,
        param_values: vec![0.4],
        seed: 0,
        ..DataConfig::default()
    };
    let train_data = generate(&data_cfg).unwrap().cast::<f32>();
    let test_data = generate(&DataConfig { n: 16, seed: 1, ..data_cfg }).unwrap().cast::<f32>();

    let model = Model::<f32>::new(ModelConfig {
        d: 32,
        heads: 2,
        n_enc: 1,
        n_mod: 2,
        seed: 0,
        ..ModelConfig::default()
    })
    .unwrap();
    println!(
        "model: {} trainable scalars over {} tensors",
        model.store.trainable_scalar_count(),
        model.store.len()
    );

    let cfg = TrainConfig { epochs: 40, batch_size: 8, max_lr: 2e-3, ..TrainConfig::default() };
    let horizon = *train_data.meta.times.last().unwrap();
    let mut trainer = Trainer::new(model, cfg.clone(), horizon).unwrap();
    let grid = GridSpec::line(train_data.meta.unit_grid());

    for epoch in 0..cfg.epochs {
        let report = trainer.train_epoch(&train_data, &grid).unwrap();
        if epoch % 5 == 0 || epoch + 1 == cfg.epochs {
            let last = report.rows.last().unwrap();
            println!(
                "epoch {epoch:3}  mean loss {:.4e}  lr {:.2e}",
                report.mean_loss, last.lr
            );
        }
    }

    let convention = cfg.time_convention;
    let report = evaluate(&trainer.model, &test_data, &grid, convention, horizon).unwrap();
    println!("\ntest nRMSE  {:.4} ± {:.4}", report.nrmse_mean, report.nrmse_std);

    // Baselines reuse the same scoring path, so the comparison is apples
    // to apples.
    let frames: Vec<usize> = (1..test_data.meta.n_t).collect();
    let persist = persistence_predictions(&test_data, &frames).unwrap();
    let persist_report = report_from_predictions(&test_data, &frames, &persist).unwrap();
    let mean = mean_predictions(&mean_frame(&train_data), &test_data, &frames).unwrap();
    let mean_report = report_from_predictions(&test_data, &frames, &mean).unwrap();
    println!("persistence {:.4}", persist_report.nrmse_mean);
    println!("mean field  {:.4}", mean_report.nrmse_mean);

    assert!(report.nrmse_mean < persist_report.nrmse_mean);
    assert!(report.nrmse_mean < mean_report.nrmse_mean);
    println!("\nsurrogate beats both baselines");
}
