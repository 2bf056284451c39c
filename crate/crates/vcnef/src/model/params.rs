//! Named parameter storage and deterministic initialization.
//!
//! Every weight and bias lives in one [`ParameterStore`] under a stable
//! hierarchical name ("enc0.attn.wq", "mod1.cond.b2", …). Registration order
//! is the single source of truth for initialization draws and checkpoint
//! layout, so the same config and seed always produce the same parameters.

use indexmap::IndexMap;

use crate::array::{Array, ArrayError, Result, Scalar};
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct Param<T> {
    pub value: Array<T>,
    pub trainable: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ParameterStore<T: Scalar> {
    entries: IndexMap<String, Param<T>>,
}

impl<T: Scalar> ParameterStore<T> {
    pub fn new() -> Self {
        ParameterStore { entries: IndexMap::new() }
    }

    pub fn register(&mut self, name: &str, value: Array<T>, trainable: bool) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(ArrayError::Graph { what: format!("parameter '{name}' registered twice") });
        }
        self.entries.insert(name.to_string(), Param { value, trainable });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Array<T>> {
        self.entries
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| ArrayError::Graph { what: format!("unknown parameter '{name}'") })
    }

    pub fn set(&mut self, name: &str, value: Array<T>) -> Result<()> {
        let p = self
            .entries
            .get_mut(name)
            .ok_or_else(|| ArrayError::Graph { what: format!("unknown parameter '{name}'") })?;
        if p.value.shape() != value.shape() {
            return Err(ArrayError::Graph {
                what: format!(
                    "parameter '{name}' shape {:?} cannot take {:?}",
                    p.value.shape(),
                    value.shape()
                ),
            });
        }
        p.value = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn trainable_scalar_count(&self) -> usize {
        self.entries.values().filter(|p| p.trainable).map(|p| p.value.numel()).sum()
    }

    pub fn total_scalar_count(&self) -> usize {
        self.entries.values().map(|p| p.value.numel()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParameterStore<U> {
        ParameterStore {
            entries: self
                .entries
                .iter()
                .map(|(k, p)| {
                    (k.clone(), Param { value: p.value.cast(), trainable: p.trainable })
                })
                .collect(),
        }
    }
}

/// Registers a weight drawn uniformly from ±√(1/fan_in) and a zero bias —
/// fan-in scaling keeps pre-activation variance independent of layer width.
pub fn init_linear<T: Scalar>(
    store: &mut ParameterStore<T>,
    rng: &mut Rng,
    prefix: &str,
    fan_in: usize,
    fan_out: usize,
) -> Result<()> {
    let w = draw_uniform(rng, &[fan_in, fan_out], (1.0 / fan_in as f64).sqrt());
    store.register(&format!("{prefix}.w"), w, true)?;
    store.register(&format!("{prefix}.b"), Array::zeros(&[fan_out]), true)
}

/// Normalize-only layer norm gets its affine part here: gain ones, shift
/// zeros.
pub fn init_layer_norm<T: Scalar>(
    store: &mut ParameterStore<T>,
    prefix: &str,
    d: usize,
) -> Result<()> {
    store.register(&format!("{prefix}.g"), Array::full(&[d], T::one()), true)?;
    store.register(&format!("{prefix}.b"), Array::zeros(&[d]), true)
}

pub fn draw_uniform<T: Scalar>(rng: &mut Rng, shape: &[usize], bound: f64) -> Array<T> {
    let n: usize = shape.iter().product();
    let data: Vec<T> = (0..n).map(|_| T::from_f64(rng.uniform(-bound, bound))).collect();
    Array::from_vec(shape.to_vec(), data).expect("uniform draws are finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_registration_rejected() {
        let mut s: ParameterStore<f64> = ParameterStore::new();
        s.register("w", Array::zeros(&[2]), true).unwrap();
        assert!(s.register("w", Array::zeros(&[2]), true).is_err());
    }

    #[test]
    fn set_preserves_shape() {
        let mut s: ParameterStore<f64> = ParameterStore::new();
        s.register("w", Array::zeros(&[2, 3]), true).unwrap();
        assert!(s.set("w", Array::zeros(&[3, 2])).is_err());
        assert!(s.set("w", Array::full(&[2, 3], 1.0)).is_ok());
        assert_eq!(s.get("w").unwrap().data()[0], 1.0);
    }

    #[test]
    fn trainable_count_excludes_frozen() {
        let mut s: ParameterStore<f64> = ParameterStore::new();
        s.register("a", Array::zeros(&[4]), true).unwrap();
        s.register("b", Array::zeros(&[6]), false).unwrap();
        assert_eq!(s.trainable_scalar_count(), 4);
        assert_eq!(s.total_scalar_count(), 10);
    }

    #[test]
    fn init_is_deterministic_and_fan_in_bounded() {
        let mut a: ParameterStore<f64> = ParameterStore::new();
        let mut b: ParameterStore<f64> = ParameterStore::new();
        init_linear(&mut a, &mut Rng::new(3, 1), "l", 16, 8).unwrap();
        init_linear(&mut b, &mut Rng::new(3, 1), "l", 16, 8).unwrap();
        assert_eq!(a.get("l.w").unwrap(), b.get("l.w").unwrap());
        let bound = (1.0f64 / 16.0).sqrt();
        assert!(a.get("l.w").unwrap().data().iter().all(|v| v.abs() <= bound));
        assert!(a.get("l.b").unwrap().data().iter().all(|&v| v == 0.0));
    }
}
