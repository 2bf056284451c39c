//! Queries a model trained on one discretization at finer ones it never
//! saw, in space and in time, without retraining anything.
//!
//! The model maps coordinates to field values, so a finer grid is just
//! more query points and a denser time axis is just more query times. The
//! spatial study regenerates the same trajectories on a doubled grid (IC
//! draws do not depend on the resolution) and scores predictions there.
//! The temporal study queries the same trajectories at 4x the frame
//! density and checks the shared timestamps agree exactly.
//!
//! ```bash
//! cargo run --release --example evaluate_zssr
//! ```

use vcnef::data::{generate, DataConfig};
use vcnef::eval::zssr::{eval_spatial_zssr, eval_temporal_zssr};
use vcnef::eval::evaluate;
use vcnef::model::forward::{GridSpec, Model};
use vcnef::model::ModelConfig;
use vcnef::train::{TrainConfig, Trainer};

fn main() {
    let data_cfg = DataConfig {
        n: 48,
        s: 32,
        n_t: 6,
        t_final: 2.0,
        param_values: vec![0.4],
        seed: 0,
        ..DataConfig::default()
    };
    let train_data = generate(&data_cfg).unwrap().cast::<f32>();
    let horizon = *train_data.meta.times.last().unwrap();

    let model = Model::<f32>::new(ModelConfig {
        d: 32,
        heads: 2,
        n_enc: 1,
        n_mod: 2,
        ..ModelConfig::default()
    })
    .unwrap();
    let cfg = TrainConfig { epochs: 30, max_lr: 2e-3, ..TrainConfig::default() };
    let mut trainer = Trainer::new(model, cfg.clone(), horizon).unwrap();
    let grid = GridSpec::line(train_data.meta.unit_grid());
    for _ in 0..cfg.epochs {
        trainer.train_epoch(&train_data, &grid).unwrap();
    }
    let model = &trainer.model;
    let convention = cfg.time_convention;

    // Held-out trajectories at the training resolution set the reference.
    let test_cfg = DataConfig { n: 16, seed: 1, ..data_cfg.clone() };
    let test = generate(&test_cfg).unwrap().cast::<f32>();
    let base = evaluate(model, &test, &grid, convention, horizon).unwrap();
    println!("nRMSE at s = {:2}: {:.4} ± {:.4}", test.meta.s, base.nrmse_mean, base.nrmse_std);

    // Same trajectories, twice the grid points. The seed fixes the IC
    // draws, so only the sampling changes.
    let fine = generate(&DataConfig { s: 2 * test_cfg.s, ..test_cfg.clone() })
        .unwrap()
        .cast::<f32>();
    let spatial = eval_spatial_zssr(model, &fine, train_data.meta.s, convention, horizon).unwrap();
    println!(
        "nRMSE at s = {:2}: {:.4} ± {:.4}  ({:.3}x the native score)",
        fine.meta.s,
        spatial.nrmse_mean,
        spatial.nrmse_std,
        spatial.nrmse_mean / base.nrmse_mean
    );

    // Same trajectories, 4x the frames. Frames shared with the coarse
    // schedule must reproduce identical predictions.
    let dense_n_t = 4 * (test_cfg.n_t - 1) + 1;
    let dense = generate(&DataConfig { n_t: dense_n_t, ..test_cfg }).unwrap().cast::<f32>();
    let temporal = eval_temporal_zssr(model, &dense, test.meta.n_t, convention, horizon).unwrap();
    println!(
        "\ndense {} frames: nRMSE {:.4};  coarse {} frames: nRMSE {:.4}",
        dense_n_t,
        temporal.dense.nrmse_mean,
        test.meta.n_t,
        temporal.coarse.nrmse_mean
    );
    println!("max prediction difference at shared times: {:.1e}", temporal.max_shared_diff);
    assert_eq!(temporal.max_shared_diff, 0.0);
}
