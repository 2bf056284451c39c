//! Adam optimizer with bias correction and no weight decay.

use indexmap::IndexMap;

use crate::array::graph::Gradients;
use crate::array::{Array, ArrayError, Result, Scalar};
use crate::model::ParameterStore;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// First and second moment estimates per trainable parameter, kept in the
/// training precision so saved state resumes bit-exactly.
#[derive(Debug, Clone)]
pub struct Adam<T: Scalar> {
    moments: IndexMap<String, (Array<T>, Array<T>)>,
    steps: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(store: &ParameterStore<T>) -> Self {
        let moments = store
            .iter()
            .filter(|(_, p)| p.trainable)
            .map(|(name, p)| {
                let z = Array::zeros(p.value.shape());
                (name.to_string(), (z.clone(), z))
            })
            .collect();
        Adam { moments, steps: 0 }
    }

    pub fn from_parts(moments: IndexMap<String, (Array<T>, Array<T>)>, steps: u64) -> Self {
        Adam { moments, steps }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn moments(&self) -> &IndexMap<String, (Array<T>, Array<T>)> {
        &self.moments
    }

    /// One update: moment decay, bias correction, then the scaled step
    /// against √v. A zero learning rate still advances the moments but
    /// leaves every parameter bit untouched.
    pub fn step(
        &mut self,
        store: &mut ParameterStore<T>,
        grads: &Gradients<T>,
        lr: f64,
    ) -> Result<()> {
        self.steps += 1;
        let b1 = T::from_f64(BETA1);
        let b2 = T::from_f64(BETA2);
        let one_m_b1 = T::from_f64(1.0 - BETA1);
        let one_m_b2 = T::from_f64(1.0 - BETA2);
        let corr1 = T::from_f64(1.0 / (1.0 - BETA1.powi(self.steps as i32)));
        let corr2 = T::from_f64(1.0 / (1.0 - BETA2.powi(self.steps as i32)));
        let lr_t = T::from_f64(lr);
        let eps = T::from_f64(EPS);

        for (name, grad) in grads {
            let (m, v) = self.moments.get_mut(name).ok_or_else(|| ArrayError::Graph {
                what: format!("gradient for '{name}' has no optimizer state"),
            })?;
            if m.shape() != grad.shape() {
                return Err(ArrayError::Graph {
                    what: format!(
                        "gradient for '{name}' has shape {:?}, optimizer holds {:?}",
                        grad.shape(),
                        m.shape()
                    ),
                });
            }
            let mut updated = store.get(name)?.clone();
            for (((p, m), v), &g) in updated
                .data_mut()
                .iter_mut()
                .zip(m.data_mut())
                .zip(v.data_mut())
                .zip(grad.data())
            {
                *m = b1 * *m + one_m_b1 * g;
                *v = b2 * *v + one_m_b2 * g * g;
                let m_hat = *m * corr1;
                let v_hat = *v * corr2;
                *p = *p - lr_t * m_hat / (v_hat.sqrt() + eps);
            }
            store.set(name, updated)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::draw_uniform;
    use crate::rng::Rng;

    fn single_param_store(value: Array<f64>) -> ParameterStore<f64> {
        let mut s = ParameterStore::new();
        s.register("w", value, true).unwrap();
        s
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_bit_identical() {
        let mut rng = Rng::new(1, 0);
        let value = draw_uniform(&mut rng, &[3, 4], 1.0);
        let mut store = single_param_store(value.clone());
        let mut opt = Adam::new(&store);
        let mut grads: Gradients<f64> = IndexMap::new();
        grads.insert("w".into(), draw_uniform(&mut rng, &[3, 4], 1.0));
        opt.step(&mut store, &grads, 0.0).unwrap();
        assert_eq!(store.get("w").unwrap(), &value);
        assert!(opt.moments()["w"].0.max_abs() > 0.0);
    }

    #[test]
    fn steps_follow_the_reference_formulas() {
        let mut store = single_param_store(Array::scalar(1.0));
        let mut opt = Adam::new(&store);
        let mut grads: Gradients<f64> = IndexMap::new();
        let gs = [0.5, -0.25, 0.125];
        let (mut m, mut v, mut p) = (0.0f64, 0.0f64, 1.0f64);
        for (t, &g) in gs.iter().enumerate() {
            grads.insert("w".into(), Array::scalar(g));
            opt.step(&mut store, &grads, 1e-2).unwrap();
            m = BETA1 * m + (1.0 - BETA1) * g;
            v = BETA2 * v + (1.0 - BETA2) * g * g;
            let m_hat = m / (1.0 - BETA1.powi(t as i32 + 1));
            let v_hat = v / (1.0 - BETA2.powi(t as i32 + 1));
            p -= 1e-2 * m_hat / (v_hat.sqrt() + EPS);
            let got = store.get("w").unwrap().data()[0];
            assert!((got - p).abs() < 1e-15, "step {t}: {got} vs {p}");
        }
    }

    #[test]
    fn unknown_gradient_is_rejected() {
        let mut store = single_param_store(Array::scalar(1.0));
        let mut opt = Adam::new(&store);
        let mut grads: Gradients<f64> = IndexMap::new();
        grads.insert("nope".into(), Array::scalar(0.1));
        assert!(opt.step(&mut store, &grads, 1e-3).is_err());
    }
}
