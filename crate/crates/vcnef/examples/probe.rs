//! Scratch probe, deleted before release.

use std::time::Instant;

use vcnef::data::{generate, DataConfig};
use vcnef::eval::baseline::{mean_frame, mean_predictions, persistence_predictions};
use vcnef::eval::{evaluate, report_from_predictions};
use vcnef::model::forward::{GridSpec, Model};
use vcnef::model::ModelConfig;
use vcnef::train::{TrainConfig, Trainer};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let max_lr: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1e-3);
    let epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(10);
    let n: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(64);
    let randomized: bool = args.get(4).map(|s| s == "1").unwrap_or(true);
    let subsample: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(8);
    let batch: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(8);
    let seed: u64 = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(0);
    let train_params: Vec<f64> = args
        .get(8)
        .map(|s| s.split(',').map(|p| p.parse().unwrap()).collect())
        .unwrap_or_else(|| vec![0.4]);
    let eval_param: f64 = args.get(9).map(|s| s.parse().unwrap()).unwrap_or(train_params[0]);
    let eval_n: usize = args.get(10).map(|s| s.parse().unwrap()).unwrap_or(16);

    let data_cfg = DataConfig {
        n,
        s: 64,
        n_t: 21,
        t_final: 2.0,
        param_values: train_params,
        seed: 0,
        ..DataConfig::default()
    };
    let train_data = generate(&data_cfg).unwrap().cast::<f32>();
    let test_data = generate(&DataConfig {
        n: eval_n,
        seed: 1,
        param_values: vec![eval_param],
        ..data_cfg.clone()
    })
    .unwrap()
    .cast::<f32>();
    let horizon = 2.0;

    let model = Model::<f32>::new(ModelConfig { seed, ..ModelConfig::default() }).unwrap();
    let cfg = TrainConfig {
        epochs,
        max_lr,
        randomized_starts: randomized,
        time_subsample: subsample,
        batch_size: batch,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(model, cfg.clone(), horizon).unwrap();
    let grid = GridSpec::line(train_data.meta.unit_grid());

    let clock = Instant::now();
    for epoch in 0..cfg.epochs {
        let r = trainer.train_epoch(&train_data, &grid).unwrap();
        let g: f64 = r.rows.iter().map(|row| row.grad_norm).sum::<f64>() / r.rows.len() as f64;
        println!(
            "epoch {epoch:3}  loss {:.4e}  mean|g| {:.3e}  lr {:.2e}  {:.1}s",
            r.mean_loss,
            g,
            r.rows.last().unwrap().lr,
            clock.elapsed().as_secs_f64()
        );
    }

    let report = evaluate(&trainer.model, &test_data, &grid, cfg.time_convention, horizon).unwrap();
    let frames: Vec<usize> = (1..test_data.meta.n_t).collect();
    let persist = persistence_predictions(&test_data, &frames).unwrap();
    let p_report = report_from_predictions(&test_data, &frames, &persist).unwrap();
    let mean = mean_frame(&train_data);
    let mean_pred = mean_predictions(&mean, &test_data, &frames).unwrap();
    let m_report = report_from_predictions(&test_data, &frames, &mean_pred).unwrap();
    println!(
        "nRMSE {:.4}  persistence {:.4}  mean {:.4}  ratio {:.3}",
        report.nrmse_mean,
        p_report.nrmse_mean,
        m_report.nrmse_mean,
        report.nrmse_mean / p_report.nrmse_mean
    );
}
