//! End-to-end checks of the command-line pipeline through the real binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use vcnef::data::format::read_dataset;
use vcnef::eval::{metrics, single_sample};
use vcnef::model::checkpoint::{
    read_checkpoint, write_checkpoint, CheckpointMeta, TimeConvention,
};
use vcnef::model::forward::Model;
use vcnef::model::ModelConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vcnef"))
}

fn write_config(dir: &Path, out: &Path, extra: &str) -> PathBuf {
    let path = dir.join("cfg.json");
    let text = format!(
        r#"{{
  "seed": 11,
  "out": "{}",
  "data": {{ "n": 4, "s": 16, "n_t": 5, "t_final": 2.0, "param_values": [0.4] }},
  "model": {{ "d": 16, "heads": 2, "n_enc": 1, "n_mod": 1 }},
  "train": {{ "epochs": 2, "batch_size": 4, "time_subsample": 2 }}{}
}}"#,
        out.display(),
        extra
    );
    fs::write(&path, text).unwrap();
    path
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn pipeline_generates_trains_evaluates_and_benches() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), &out, ",\n  \"eval\": { \"spatial_zssr\": 2, \"temporal_zssr\": 9 }");

    let gen = run_ok(bin().args(["generate", "--config"]).arg(&cfg));
    let text = String::from_utf8_lossy(&gen.stdout).to_string();
    assert!(text.contains("4 trajectories"), "{text}");
    let data = read_dataset(&out.join("dataset.vcnf")).unwrap();
    assert_eq!(data.meta.n, 4);
    assert!(data.meta.config_hash.is_some());

    run_ok(bin().args(["train", "--config"]).arg(&cfg));
    let (meta, model) = read_checkpoint(&out.join("checkpoint.vcnp")).unwrap();
    assert_eq!(meta.epoch, 2);
    assert_eq!(meta.config_hash, data.meta.config_hash);
    assert_eq!(model.cfg.d, 16);
    let log = fs::read_to_string(out.join("train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,step,lr,loss,grad_norm,wall_ms\n"));
    assert_eq!(log.lines().count(), 1 + 8);

    run_ok(bin().args(["eval", "--config"]).arg(&cfg));
    for file in [
        "report.json",
        "temporal_error.csv",
        "heatmap.csv",
        "predictions.vcnf",
        "zssr_spatial.json",
        "zssr_temporal.json",
    ] {
        assert!(out.join(file).exists(), "missing {file}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["nrmse_mean"].as_f64().unwrap().is_finite());

    run_ok(bin().args(["bench", "--config"]).arg(&cfg).args(["--steps", "2,3"]));
    let bench = fs::read_to_string(out.join("bench.csv")).unwrap();
    assert!(bench.starts_with("mode,n_steps,wall_ms_median,peak_bytes\n"));
    assert_eq!(bench.lines().count(), 1 + 4);
}

#[test]
fn report_metrics_match_recomputation_from_saved_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), &out, "");

    run_ok(bin().args(["generate", "--config"]).arg(&cfg));
    run_ok(bin().args(["train", "--config"]).arg(&cfg));
    run_ok(bin().args(["eval", "--config"]).arg(&cfg));

    let truth = read_dataset(&out.join("dataset.vcnf")).unwrap();
    let preds = read_dataset(&out.join("predictions.vcnf")).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();

    let frames: Vec<usize> = (1..truth.meta.n_t).collect();
    for i in 0..truth.meta.n {
        let y = single_sample(&truth, &frames, i);
        let yh = single_sample(&preds, &frames, i);
        let want = metrics::nrmse(&y, &yh).unwrap().value;
        let got = report["per_sample_nrmse"][i].as_f64().unwrap();
        assert!(
            (want - got).abs() < 1e-7,
            "sample {i}: report {got} vs recomputed {want}"
        );
    }
}

#[test]
fn same_seed_produces_byte_identical_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let cfg = write_config(dir.path(), &out_a, "");

    run_ok(bin().args(["generate", "--config"]).arg(&cfg));
    run_ok(bin().args(["generate", "--config"]).arg(&cfg).arg("--out").arg(&out_b));

    let a = fs::read(out_a.join("dataset.vcnf")).unwrap();
    let b = fs::read(out_b.join("dataset.vcnf")).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn unknown_config_keys_fail_with_a_complete_listing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(
        &path,
        r#"{"seed": 1, "bogus": true, "train": {"epochs": 1, "misspelled": 2}}"#,
    )
    .unwrap();
    let out = bin().args(["generate", "--config"]).arg(&path).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(err.contains("bogus"), "{err}");
    assert!(err.contains("train.misspelled"), "{err}");
}

#[test]
fn interrupted_training_resumes_into_the_same_loss_log() {
    let dir = tempfile::tempdir().unwrap();
    let out_full = dir.path().join("full");
    let out_chunked = dir.path().join("chunked");
    let cfg_full = write_config(dir.path(), &out_full, "");

    run_ok(bin().args(["generate", "--config"]).arg(&cfg_full));
    run_ok(bin().args(["train", "--config"]).arg(&cfg_full));

    let cfg_chunked = {
        let p = dir.path().join("cfg_chunked.json");
        fs::copy(&cfg_full, &p).unwrap();
        p
    };
    fs::create_dir_all(&out_chunked).unwrap();
    fs::copy(out_full.join("dataset.vcnf"), out_chunked.join("dataset.vcnf")).unwrap();
    run_ok(
        bin()
            .args(["train", "--config"])
            .arg(&cfg_chunked)
            .arg("--out")
            .arg(&out_chunked)
            .args(["--stop-after", "1"]),
    );
    run_ok(
        bin()
            .args(["train", "--config"])
            .arg(&cfg_chunked)
            .arg("--out")
            .arg(&out_chunked)
            .arg("--resume"),
    );

    let strip_wall = |text: String| -> Vec<String> {
        text.lines()
            .map(|l| l.rsplit_once(',').map(|(head, _)| head.to_string()).unwrap())
            .collect()
    };
    let full = strip_wall(fs::read_to_string(out_full.join("train_log.csv")).unwrap());
    let chunked = strip_wall(fs::read_to_string(out_chunked.join("train_log.csv")).unwrap());
    assert_eq!(full.len(), 9);
    assert_eq!(full, chunked);

    let a = fs::read(out_full.join("checkpoint.vcnp")).unwrap();
    let b = fs::read(out_chunked.join("checkpoint.vcnp")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn eval_refuses_a_checkpoint_with_mismatched_channels() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), &out, "");
    run_ok(bin().args(["generate", "--config"]).arg(&cfg));

    let model_cfg = ModelConfig { c: 2, d: 16, heads: 2, n_enc: 1, n_mod: 1, ..Default::default() };
    let model = Model::<f32>::new(model_cfg.clone()).unwrap();
    let meta = CheckpointMeta {
        model: model_cfg,
        time_norm: 2.0,
        time_convention: TimeConvention::Relative,
        seed: 7,
        epoch: 1,
        config_hash: None,
    };
    write_checkpoint(&out.join("checkpoint.vcnp"), &meta, &model.store).unwrap();

    let out_run = bin().args(["eval", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out_run.status.success());
    let err = String::from_utf8_lossy(&out_run.stderr).to_string();
    assert!(err.contains("channels"), "{err}");
}

#[test]
fn thread_cap_env_var_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), &out, "");
    run_ok(bin().args(["generate", "--config"]).arg(&cfg).env("VCNEF_THREADS", "1"));
    assert!(out.join("dataset.vcnf").exists());
}
