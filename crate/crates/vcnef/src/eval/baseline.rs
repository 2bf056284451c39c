//! Trivial reference predictors that any trained model must beat.

use crate::array::{Array, Result, Scalar};
use crate::data::Dataset;

/// Repeats one frame at every query time: [n_times, s, c].
pub fn repeat_frame<T: Scalar>(frame: &Array<T>, n_times: usize) -> Result<Array<T>> {
    let (s, c) = (frame.shape()[0], frame.shape()[1]);
    let mut out = Vec::with_capacity(n_times * s * c);
    for _ in 0..n_times {
        out.extend_from_slice(frame.data());
    }
    Array::from_vec(vec![n_times, s, c], out)
}

/// Persistence baseline: the conditioning frame is the prediction at every
/// future time.
pub fn persistence_baseline<T: Scalar>(u0: &Array<T>, n_times: usize) -> Result<Array<T>> {
    repeat_frame(u0, n_times)
}

/// Persistence predictions for a whole dataset, [n, n_frames, s, c],
/// conditioning each sample on its frame 0.
pub fn persistence_predictions<T: Scalar>(
    data: &Dataset<T>,
    frames: &[usize],
) -> Result<Array<T>> {
    let m = &data.meta;
    let mut out = Vec::with_capacity(m.n * frames.len() * m.s * m.c);
    for i in 0..m.n {
        let u0 = data.frame(i, 0);
        out.extend(repeat_frame(&u0, frames.len())?.data().iter().copied());
    }
    Array::from_vec(vec![m.n, frames.len(), m.s, m.c], out)
}

/// Pointwise mean field over every sample and frame of a dataset, [s, c].
pub fn mean_frame<T: Scalar>(data: &Dataset<T>) -> Array<T> {
    let m = &data.meta;
    let frame_len = m.s * m.c;
    let mut acc = vec![0.0f64; frame_len];
    let vals = data.values.data();
    for chunk in vals.chunks_exact(frame_len) {
        for (a, &v) in acc.iter_mut().zip(chunk) {
            *a += v.to_f64();
        }
    }
    let count = (m.n * m.n_t) as f64;
    let mean = acc.into_iter().map(|a| T::from_f64(a / count)).collect();
    Array::from_vec(vec![m.s, m.c], mean).expect("validated dataset")
}

/// Mean-predictor baseline over a dataset: every query answered with the
/// training-set mean field, [n, n_frames, s, c].
pub fn mean_predictions<T: Scalar>(
    mean: &Array<T>,
    data: &Dataset<T>,
    frames: &[usize],
) -> Result<Array<T>> {
    let m = &data.meta;
    let per_sample = repeat_frame(mean, frames.len())?;
    let mut out = Vec::with_capacity(m.n * per_sample.data().len());
    for _ in 0..m.n {
        out.extend_from_slice(per_sample.data());
    }
    Array::from_vec(vec![m.n, frames.len(), m.s, m.c], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, DataConfig};
    use crate::eval::{metrics, report_from_predictions, single_sample};

    fn moving_data() -> Dataset<f64> {
        generate(&DataConfig {
            n: 3,
            s: 32,
            n_t: 6,
            t_final: 2.0,
            param_values: vec![0.4],
            seed: 5,
            ..DataConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn persistence_repeats_the_conditioning_frame_exactly() {
        let data = moving_data();
        let u0 = data.frame(0, 0);
        let pred = persistence_baseline(&u0, 4).unwrap();
        assert_eq!(pred.shape(), &[4, 32, 1]);
        for k in 0..4 {
            assert_eq!(&pred.data()[k * 32..(k + 1) * 32], u0.data());
        }
    }

    #[test]
    fn a_moving_field_gives_positive_persistence_error_growing_from_zero() {
        let data = moving_data();
        let frames: Vec<usize> = (1..6).collect();
        let preds = persistence_predictions(&data, &frames).unwrap();
        let report = report_from_predictions(&data, &frames, &preds).unwrap();
        assert!(report.nrmse_mean > 0.0);
        assert!(
            report.temporal[0].mean < report.temporal.last().unwrap().mean,
            "persistence error should grow with the advected displacement"
        );

        let slow = generate(&DataConfig {
            n: 3,
            s: 32,
            n_t: 6,
            t_final: 0.05,
            param_values: vec![0.4],
            seed: 5,
            ..DataConfig::default()
        })
        .unwrap();
        let slow_preds = persistence_predictions(&slow, &frames).unwrap();
        let slow_report = report_from_predictions(&slow, &frames, &slow_preds).unwrap();
        assert!(
            slow_report.temporal[0].mean < 0.25,
            "tiny displacements should give tiny persistence error, got {}",
            slow_report.temporal[0].mean
        );
        assert!(slow_report.temporal[0].mean < report.temporal[0].mean);
    }

    #[test]
    fn persistence_nrmse_matches_a_scalar_oracle() {
        let data = moving_data();
        let frames = vec![2usize, 4];
        let preds = persistence_predictions(&data, &frames).unwrap();
        let report = report_from_predictions(&data, &frames, &preds).unwrap();

        for i in 0..3 {
            let truth = single_sample(&data, &frames, i);
            let u0 = data.frame(i, 0);
            let mut want = 0.0;
            for (kk, _) in frames.iter().enumerate() {
                let mut err = 0.0;
                let mut norm = 0.0;
                for p in 0..32 {
                    let y = truth.data()[kk * 32 + p];
                    let d = y - u0.data()[p];
                    err += d * d;
                    norm += y * y;
                }
                want += (err / norm).sqrt();
            }
            want /= 2.0;
            assert!((report.per_sample_nrmse[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_field_matches_a_scalar_loop_and_feeds_the_baseline() {
        let data = moving_data();
        let mean = mean_frame(&data);
        let vals = data.values.data();
        for p in 0..32 {
            let mut s = 0.0;
            for i in 0..3 {
                for k in 0..6 {
                    s += vals[(i * 6 + k) * 32 + p];
                }
            }
            assert!((mean.data()[p] - s / 18.0).abs() < 1e-15);
        }

        let frames = vec![1usize, 3];
        let preds = mean_predictions(&mean, &data, &frames).unwrap();
        assert_eq!(preds.shape(), &[3, 2, 32, 1]);
        let report = report_from_predictions(&data, &frames, &preds).unwrap();
        let truth = single_sample(&data, &frames, 1);
        let pred1 = repeat_frame(&mean, 2).unwrap();
        let want = metrics::nrmse(&truth, &pred1).unwrap().value;
        assert!((report.per_sample_nrmse[1] - want).abs() < 1e-15);
    }
}
