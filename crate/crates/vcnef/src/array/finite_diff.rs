//! Central-difference gradient oracle.
//!
//! [`finite_diff_grad`] estimates d(scalar)/d(param) by re-evaluating the
//! caller's function with each coordinate nudged up and down. It shares no
//! code with the tape's backward pass, so agreement between the two is
//! evidence, not tautology. Always `f64`: the oracle's own truncation and
//! roundoff error must sit well below the tolerances it checks.

use indexmap::IndexMap;

use super::Array;

/// Named `f64` parameter set, the common currency of oracle checks.
pub type Params = IndexMap<String, Array<f64>>;

/// Central differences, (f(x+h) − f(x−h)) / 2h, one coordinate at a time.
pub fn finite_diff_grad<F: FnMut(&Params) -> f64>(mut f: F, params: &Params, h: f64) -> Params {
    let mut out = IndexMap::with_capacity(params.len());
    let mut work = params.clone();
    for name in params.keys() {
        let shape = params[name].shape().to_vec();
        let n = params[name].numel();
        let mut g = vec![0.0; n];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = work[name].data()[i];
            work.get_mut(name).unwrap().data_mut()[i] = orig + h;
            let fp = f(&work);
            work.get_mut(name).unwrap().data_mut()[i] = orig - h;
            let fm = f(&work);
            work.get_mut(name).unwrap().data_mut()[i] = orig;
            *gi = (fp - fm) / (2.0 * h);
        }
        out.insert(name.clone(), Array::from_vec(shape, g).unwrap());
    }
    out
}

/// Largest elementwise deviation, scaled by the reference's largest
/// magnitude. The floor keeps an all-zero reference from dividing by zero.
pub fn max_relative_error(got: &Array<f64>, want: &Array<f64>) -> f64 {
    debug_assert_eq!(got.shape(), want.shape());
    let scale = want.max_abs().max(1e-12);
    let worst = got
        .data()
        .iter()
        .zip(want.data())
        .map(|(&a, &b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    worst / scale
}

/// [`max_relative_error`] taken over every parameter in the set.
pub fn max_relative_error_all(got: &Params, want: &Params) -> f64 {
    want.iter()
        .map(|(name, w)| max_relative_error(&got[name], w))
        .fold(0.0f64, f64::max)
}
