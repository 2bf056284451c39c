//! Evaluation reports: per-sample metrics, aggregates, temporal error
//! curves, heatmaps, and their on-disk exports.

use std::fs::File;
use std::io::{BufWriter, Write as IoWrite};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eval::bench::TimingRecord;
use crate::eval::metrics::Heatmap;

/// Mean and population standard deviation of a slice.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One evaluated query time with its error statistics across samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalPoint {
    pub t: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_samples: usize,
    /// Physical timestamps of the evaluated frames.
    pub eval_times: Vec<f64>,
    pub per_sample_nrmse: Vec<f64>,
    pub per_sample_brmse: Vec<f64>,
    pub nrmse_mean: f64,
    pub nrmse_std: f64,
    pub brmse_mean: f64,
    pub brmse_std: f64,
    /// Zero-norm truth slices excluded from normalized metrics.
    pub skipped_slices: usize,
    pub temporal: Vec<TemporalPoint>,
    /// Mean relative error per (time, point), NaN cells excluded upstream;
    /// kept out of the JSON export, written as its own CSV.
    #[serde(skip)]
    pub heatmap: Option<Heatmap>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub timings: Vec<TimingRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl EvalReport {
    /// Builds the aggregate fields from per-sample metrics.
    pub fn from_samples(
        eval_times: Vec<f64>,
        per_sample_nrmse: Vec<f64>,
        per_sample_brmse: Vec<f64>,
        skipped_slices: usize,
        temporal: Vec<TemporalPoint>,
        heatmap: Option<Heatmap>,
    ) -> Self {
        let (nrmse_mean, nrmse_std) = mean_std(&per_sample_nrmse);
        let (brmse_mean, brmse_std) = mean_std(&per_sample_brmse);
        EvalReport {
            n_samples: per_sample_nrmse.len(),
            eval_times,
            per_sample_nrmse,
            per_sample_brmse,
            nrmse_mean,
            nrmse_std,
            brmse_mean,
            brmse_std,
            skipped_slices,
            temporal,
            heatmap,
            timings: Vec::new(),
            config_hash: None,
        }
    }
}

/// Aggregate error across independently trained runs, reported as
/// mean ± std of the per-run means.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedSummary {
    pub runs: usize,
    pub nrmse_mean: f64,
    pub nrmse_std: f64,
    pub brmse_mean: f64,
    pub brmse_std: f64,
}

pub fn summarize_seeds(reports: &[EvalReport]) -> SeedSummary {
    let nr: Vec<f64> = reports.iter().map(|r| r.nrmse_mean).collect();
    let br: Vec<f64> = reports.iter().map(|r| r.brmse_mean).collect();
    let (nrmse_mean, nrmse_std) = mean_std(&nr);
    let (brmse_mean, brmse_std) = mean_std(&br);
    SeedSummary { runs: reports.len(), nrmse_mean, nrmse_std, brmse_mean, brmse_std }
}

pub fn write_report_json(path: &Path, report: &EvalReport) -> Result<(), std::io::Error> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, report)?;
    writeln!(w)?;
    w.flush()
}

pub fn write_temporal_csv(path: &Path, report: &EvalReport) -> Result<(), std::io::Error> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,mean,std")?;
    for p in &report.temporal {
        writeln!(w, "{},{},{}", p.t, p.mean, p.std)?;
    }
    w.flush()
}

/// Heatmap grid as CSV, one evaluated time per row.
pub fn write_heatmap_csv(path: &Path, heatmap: &Heatmap) -> Result<(), std::io::Error> {
    let mut w = BufWriter::new(File::create(path)?);
    for k in 0..heatmap.n_t {
        let row: Vec<String> =
            (0..heatmap.s).map(|i| format!("{}", heatmap.get(k, i))).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()
}

pub fn write_bench_csv(path: &Path, records: &[TimingRecord]) -> Result<(), std::io::Error> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "mode,n_steps,wall_ms_median,peak_bytes")?;
    for r in records {
        writeln!(w, "{},{},{},{}", r.mode, r.n_steps, r.wall_ms, r.peak_bytes)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregates_recompute_from_per_sample_values() {
        let nr = vec![0.1, 0.3, 0.2];
        let br = vec![0.01, 0.02, 0.06];
        let report = EvalReport::from_samples(
            vec![0.5, 1.0],
            nr.clone(),
            br.clone(),
            0,
            vec![],
            None,
        );
        let (m, s) = mean_std(&nr);
        assert!((report.nrmse_mean - m).abs() < 1e-15);
        assert!((report.nrmse_std - s).abs() < 1e-15);
        assert!((report.nrmse_mean - 0.2).abs() < 1e-15);
        let want_std = (((0.1f64 - 0.2).powi(2) + (0.3f64 - 0.2).powi(2)) / 3.0).sqrt();
        assert!((report.nrmse_std - want_std).abs() < 1e-15);
        let (bm, _) = mean_std(&br);
        assert!((report.brmse_mean - bm).abs() < 1e-15);
    }

    #[test]
    fn seed_summary_is_mean_and_spread_of_run_means() {
        let a = EvalReport::from_samples(vec![1.0], vec![0.2, 0.4], vec![0.1], 0, vec![], None);
        let b = EvalReport::from_samples(vec![1.0], vec![0.1, 0.3], vec![0.3], 0, vec![], None);
        let s = summarize_seeds(&[a, b]);
        assert_eq!(s.runs, 2);
        assert!((s.nrmse_mean - 0.25).abs() < 1e-15);
        assert!((s.nrmse_std - 0.05).abs() < 1e-15);
    }

    #[test]
    fn exports_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut report = EvalReport::from_samples(
            vec![0.5, 1.0],
            vec![0.25, 0.5],
            vec![0.125, 0.25],
            2,
            vec![
                TemporalPoint { t: 0.5, mean: 0.25, std: 0.01 },
                TemporalPoint { t: 1.0, mean: 0.5, std: 0.02 },
            ],
            Some(Heatmap { n_t: 2, s: 3, cells: vec![0.0, 0.5, 1.0, 0.25, f64::NAN, 0.75] }),
        );
        report.config_hash = Some("deadbeef".into());

        let jpath = dir.path().join("report.json");
        write_report_json(&jpath, &report).unwrap();
        let back: EvalReport =
            serde_json::from_str(&std::fs::read_to_string(&jpath).unwrap()).unwrap();
        assert_eq!(back.per_sample_nrmse, report.per_sample_nrmse);
        assert_eq!(back.config_hash.as_deref(), Some("deadbeef"));
        assert!(back.heatmap.is_none());

        let tpath = dir.path().join("temporal_error.csv");
        write_temporal_csv(&tpath, &report).unwrap();
        let text = std::fs::read_to_string(&tpath).unwrap();
        assert!(text.starts_with("t,mean,std\n0.5,0.25,0.01\n"));

        let hpath = dir.path().join("heatmap.csv");
        write_heatmap_csv(&hpath, report.heatmap.as_ref().unwrap()).unwrap();
        let text = std::fs::read_to_string(&hpath).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("NaN"));
    }
}
