//! Verifies reverse-mode gradients of the full forward pass against
//! central finite differences.
//!
//! A tiny float64 model is pushed through the whole pipeline (encoder,
//! modulation, decoder) to a scalar loss. For a handful of parameter
//! entries the analytic gradient is compared with
//! (L(θ+h) − L(θ−h)) / 2h, which agrees to the truncation error of the
//! difference when the backward pass is right.
//!
//! ```bash
//! cargo run --release --example gradient_check
//! ```

use vcnef::array::graph::Graph;
use vcnef::array::Array;
use vcnef::model::encoding::bind_params;
use vcnef::model::forward::{build_forward, BatchItem, GridSpec, Model};
use vcnef::model::ModelConfig;
use vcnef::rng::Rng;
use vcnef::train::mse_loss;

const H: f64 = 1e-5;

/// Loss of the model as configured, recomputed from scratch each call so
/// nudged parameters flow through the entire graph.
fn loss_value(
    model: &Model<f64>,
    grid: &GridSpec,
    item: BatchItem<f64>,
    target: &Array<f64>,
) -> f64 {
    let mut g = Graph::new();
    let pm = bind_params(&mut g, &model.store, false).unwrap();
    let out = build_forward(&mut g, &pm, &model.cfg, grid, &[item]).unwrap();
    let tgt = g.constant(target.clone());
    let loss = mse_loss(&mut g, out, tgt).unwrap();
    g.value(loss).unwrap().item().unwrap()
}

fn main() {
    let cfg = ModelConfig {
        d: 8,
        heads: 2,
        n_enc: 1,
        n_mod: 1,
        lff_dim: 4,
        ..ModelConfig::default()
    };
    let mut model = Model::<f64>::new(cfg).unwrap();

    let s = 4;
    let mut rng = Rng::new(5, 0);
    let xs: Vec<f64> = (0..s).map(|i| i as f64 / s as f64).collect();
    let grid = GridSpec::line(xs);
    let u0 = Array::from_vec(
        vec![s, 1],
        (0..s).map(|_| rng.uniform(-1.0, 1.0)).collect(),
    )
    .unwrap();
    let p = [0.4];
    let times = [0.5, 1.0];
    let target = Array::from_vec(
        vec![times.len() * s, 1],
        (0..times.len() * s).map(|_| rng.uniform(-1.0, 1.0)).collect(),
    )
    .unwrap();
    let item = BatchItem { u0: &u0, p: &p, times: &times };

    // One backward pass gives every analytic gradient at once.
    let grads = {
        let mut g = Graph::new();
        let pm = bind_params(&mut g, &model.store, true).unwrap();
        let out = build_forward(&mut g, &pm, &model.cfg, &grid, &[item]).unwrap();
        let tgt = g.constant(target.clone());
        let loss = mse_loss(&mut g, out, tgt).unwrap();
        g.backward_consuming(loss).unwrap()
    };

    let all_names: Vec<String> = grads.keys().cloned().collect();
    let names: Vec<&String> = all_names.iter().step_by((all_names.len() / 8).max(1)).collect();
    println!("{} trainable tensors; probing one entry in each of {}", grads.len(), names.len());
    println!("  {:<28} {:>13} {:>13} {:>10}", "parameter", "analytic", "numeric", "rel err");

    let mut worst = 0.0f64;
    for name in names {
        let flat = {
            let n = model.store.get(name).unwrap().numel();
            n / 2
        };
        let analytic = grads[name].data()[flat];

        // Nudge the chosen entry both ways and difference the losses.
        let base = model.store.get(name).unwrap().clone();
        let mut nudge = |delta: f64| {
            let mut v = base.clone();
            v.data_mut()[flat] += delta;
            model.store.set(name, v).unwrap();
            loss_value(&model, &grid, item, &target)
        };
        let up = nudge(H);
        let down = nudge(-H);
        model.store.set(name, base).unwrap();

        let numeric = (up - down) / (2.0 * H);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12);
        worst = worst.max(rel);
        println!("  {name:<28} {analytic:>13.6e} {numeric:>13.6e} {rel:>10.2e}");
    }

    println!("\nworst relative error: {worst:.2e}");
    assert!(worst < 1e-6, "backward pass disagrees with finite differences");
}
