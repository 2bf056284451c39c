//! Conditional neural field surrogate for time-dependent PDEs.
//!
//! The model maps an initial condition, the PDE parameters, and a set of
//! query times to the solution field at those times. An attention encoder
//! turns the initial condition into a latent token sequence once per
//! solution; a stack of modulation blocks then conditions that latent on
//! each query time's coordinate encoding, so all query times can be
//! evaluated in parallel or one at a time with identical results.

pub mod attention;
pub mod blocks;
pub mod checkpoint;
pub mod encoding;
pub mod forward;
pub mod params;

use serde::{Deserialize, Serialize};

use crate::array::{ArrayError, Result, Scalar};
use crate::rng::Rng;
pub use params::ParameterStore;

/// Architecture hyperparameters. Everything needed to rebuild the exact
/// parameter set lives here; grid sizes and time grids are runtime inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Latent token width.
    pub d: usize,
    /// Attention heads; must divide `d`.
    pub heads: usize,
    /// Encoder transformer blocks.
    pub n_enc: usize,
    /// Modulation blocks; at least one, since the query time enters only
    /// through modulation.
    pub n_mod: usize,
    /// Solution channels.
    pub c: usize,
    /// PDE parameters appended to every initial-condition token.
    pub j: usize,
    /// Spatial dimensionality of the fields: 1 or 2.
    pub dim: usize,
    /// Small patch edge for 2D tokenization.
    pub patch_small: usize,
    /// Large patch edge for 2D tokenization.
    pub patch_large: usize,
    /// Width of the learnable Fourier feature embedding (2D coordinates).
    pub lff_dim: usize,
    /// Whether the Fourier frequency matrix receives gradients.
    pub lff_trainable: bool,
    /// Self-attention inside modulation blocks; `false` swaps it for the
    /// identity map.
    pub use_attention: bool,
    /// Adds a conditioned shift after the multiplicative modulation.
    pub shift_in_film: bool,
    /// Keep both patch scales in 2D; `false` keeps only the large one.
    pub multiscale: bool,
    /// Seed for parameter initialization.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 64,
            heads: 4,
            n_enc: 2,
            n_mod: 2,
            c: 1,
            j: 1,
            dim: 1,
            patch_small: 4,
            patch_large: 16,
            lff_dim: 16,
            lff_trainable: true,
            use_attention: true,
            shift_in_film: false,
            multiscale: true,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |what: String| Err(ArrayError::Invalid { op: "model config", what });
        if self.d == 0 || self.heads == 0 || self.d % self.heads != 0 {
            return fail(format!("heads ({}) must divide d ({})", self.heads, self.d));
        }
        if self.d / self.heads < 2 {
            return fail(format!(
                "head width {} is degenerate; attention needs at least 2 dims per head",
                self.d / self.heads
            ));
        }
        if self.n_mod == 0 {
            return fail("n_mod must be at least 1".into());
        }
        if self.c == 0 {
            return fail("c must be at least 1".into());
        }
        match self.dim {
            1 => {}
            2 => {
                if self.d % 2 != 0 {
                    return fail("2D time encoding interleaves sin/cos, so d must be even".into());
                }
                if self.lff_dim == 0 || self.lff_dim % 2 != 0 {
                    return fail("lff_dim must be positive and even".into());
                }
                if self.patch_small == 0 || self.patch_large == 0 {
                    return fail("patch edges must be positive".into());
                }
                if self.patch_small > self.patch_large {
                    return fail(format!(
                        "patch_small ({}) must not exceed patch_large ({})",
                        self.patch_small, self.patch_large
                    ));
                }
            }
            other => return fail(format!("dim must be 1 or 2, got {other}")),
        }
        Ok(())
    }

    /// Width of one initial-condition token's input before projection.
    pub fn ic_width_1d(&self) -> usize {
        self.c + 1 + self.j
    }

    /// Attention denominator guard, chosen by training precision.
    pub fn attention_eps<T: Scalar>(&self) -> f64 {
        match T::DTYPE {
            crate::array::Dtype::F32 => 1e-6,
            crate::array::Dtype::F64 => 0.0,
        }
    }
}

/// Builds the full parameter set for a config. Draws happen in registration
/// order from a single stream, so (config, seed) fixes every value.
pub fn init_params<T: Scalar>(cfg: &ModelConfig) -> Result<ParameterStore<T>> {
    cfg.validate()?;
    let mut store = ParameterStore::new();
    let mut rng = Rng::new(cfg.seed, 0);
    let d = cfg.d;

    match cfg.dim {
        1 => {
            params::init_linear(&mut store, &mut rng, "coord", 2, d)?;
            params::init_linear(&mut store, &mut rng, "ic", cfg.ic_width_1d(), d)?;
        }
        2 => {
            let half = cfg.lff_dim / 2;
            let wr = params::draw_uniform(&mut rng, &[2, half], (1.0f64 / 2.0).sqrt());
            store.register("coord.lff.wr", wr, cfg.lff_trainable)?;
            params::init_linear(&mut store, &mut rng, "coord.lff.l1", cfg.lff_dim, cfg.lff_dim)?;
            params::init_linear(&mut store, &mut rng, "coord.lff.l2", cfg.lff_dim, cfg.lff_dim)?;
            let ps = cfg.patch_small * cfg.patch_small;
            let pl = cfg.patch_large * cfg.patch_large;
            if cfg.multiscale {
                params::init_linear(&mut store, &mut rng, "coord.proj_s", d + ps * cfg.lff_dim, d)?;
                params::init_linear(&mut store, &mut rng, "ic.proj_s", ps * cfg.c + cfg.j, d)?;
            }
            params::init_linear(&mut store, &mut rng, "coord.proj_l", d + cfg.lff_dim, d)?;
            params::init_linear(&mut store, &mut rng, "ic.proj_l", pl * cfg.c + cfg.j, d)?;
        }
        _ => unreachable!("validated above"),
    }

    for i in 0..cfg.n_enc {
        init_attention(&mut store, &mut rng, &format!("enc{i}"), d)?;
        init_block_tail(&mut store, &mut rng, &format!("enc{i}"), d)?;
    }

    for i in 0..cfg.n_mod {
        let prefix = format!("mod{i}");
        if cfg.use_attention {
            init_attention(&mut store, &mut rng, &prefix, d)?;
        }
        params::init_layer_norm(&mut store, &format!("{prefix}.ln1"), d)?;
        params::init_linear(&mut store, &mut rng, &format!("{prefix}.cond.l1"), d, 2 * d)?;
        params::init_linear(&mut store, &mut rng, &format!("{prefix}.cond.l2"), 2 * d, d)?;
        if cfg.shift_in_film {
            params::init_linear(&mut store, &mut rng, &format!("{prefix}.shift.l1"), d, 2 * d)?;
            params::init_linear(&mut store, &mut rng, &format!("{prefix}.shift.l2"), 2 * d, d)?;
        }
        params::init_linear(&mut store, &mut rng, &format!("{prefix}.mlp.l1"), d, 2 * d)?;
        params::init_linear(&mut store, &mut rng, &format!("{prefix}.mlp.l2"), 2 * d, d)?;
        params::init_layer_norm(&mut store, &format!("{prefix}.ln2"), d)?;
    }

    match cfg.dim {
        1 => {
            params::init_linear(&mut store, &mut rng, "dec.l1", d, d)?;
            params::init_linear(&mut store, &mut rng, "dec.l2", d, cfg.c)?;
        }
        2 => {
            let ps = cfg.patch_small * cfg.patch_small;
            let pl = cfg.patch_large * cfg.patch_large;
            if cfg.multiscale {
                params::init_linear(&mut store, &mut rng, "dec.proj_s", d, ps * cfg.c)?;
            }
            params::init_linear(&mut store, &mut rng, "dec.proj_l", d, pl * cfg.c)?;
            if cfg.multiscale {
                store.register("dec.mix", crate::array::Array::zeros(&[2]), true)?;
            }
        }
        _ => unreachable!(),
    }

    Ok(store)
}

fn init_attention<T: Scalar>(
    store: &mut ParameterStore<T>,
    rng: &mut Rng,
    prefix: &str,
    d: usize,
) -> Result<()> {
    for proj in ["wq", "wk", "wv", "wo"] {
        params::init_linear(store, rng, &format!("{prefix}.attn.{proj}"), d, d)?;
    }
    Ok(())
}

fn init_block_tail<T: Scalar>(
    store: &mut ParameterStore<T>,
    rng: &mut Rng,
    prefix: &str,
    d: usize,
) -> Result<()> {
    params::init_layer_norm(store, &format!("{prefix}.ln1"), d)?;
    params::init_linear(store, rng, &format!("{prefix}.mlp.l1"), d, 2 * d)?;
    params::init_linear(store, rng, &format!("{prefix}.mlp.l2"), 2 * d, d)?;
    params::init_layer_norm(store, &format!("{prefix}.ln2"), d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_validates() {
        ModelConfig::default().validate().unwrap();
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut c = ModelConfig::default();
        c.heads = 5;
        assert!(c.validate().is_err());
        c = ModelConfig { n_mod: 0, ..ModelConfig::default() };
        assert!(c.validate().is_err());
        c = ModelConfig { dim: 3, ..ModelConfig::default() };
        assert!(c.validate().is_err());
        c = ModelConfig { dim: 2, patch_small: 8, patch_large: 4, ..ModelConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let cfg = ModelConfig { d: 8, heads: 2, ..ModelConfig::default() };
        let a: ParameterStore<f64> = init_params(&cfg).unwrap();
        let b: ParameterStore<f64> = init_params(&cfg).unwrap();
        assert_eq!(a.len(), b.len());
        for ((na, pa), (nb, pb)) in a.iter().zip(b.iter()) {
            assert_eq!(na, nb);
            assert_eq!(&pa.value, &pb.value);
        }
        let other: ParameterStore<f64> =
            init_params(&ModelConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.get("ic.w").unwrap(), other.get("ic.w").unwrap());
    }

    #[test]
    fn frozen_fourier_frequencies_drop_out_of_the_trainable_count() {
        let base = ModelConfig { dim: 2, d: 16, heads: 2, lff_dim: 8, ..ModelConfig::default() };
        let trainable: ParameterStore<f64> = init_params(&base).unwrap();
        let frozen: ParameterStore<f64> =
            init_params(&ModelConfig { lff_trainable: false, ..base }).unwrap();
        assert_eq!(trainable.total_scalar_count(), frozen.total_scalar_count());
        let wr_numel = trainable.get("coord.lff.wr").unwrap().numel();
        assert_eq!(
            trainable.trainable_scalar_count(),
            frozen.trainable_scalar_count() + wr_numel
        );
    }

    #[test]
    fn ablations_change_the_parameter_set() {
        let base = ModelConfig { d: 8, heads: 2, ..ModelConfig::default() };
        let with: ParameterStore<f64> = init_params(&base).unwrap();
        let without: ParameterStore<f64> =
            init_params(&ModelConfig { use_attention: false, ..base }).unwrap();
        assert!(with.contains("mod0.attn.wq.w"));
        assert!(!without.contains("mod0.attn.wq.w"));
        let shifted: ParameterStore<f64> =
            init_params(&ModelConfig { shift_in_film: true, ..base }).unwrap();
        assert!(shifted.contains("mod0.shift.l1.w"));
        assert!(!with.contains("mod0.shift.l1.w"));
    }

    #[test]
    fn single_scale_drops_the_small_branch() {
        let cfg = ModelConfig {
            dim: 2,
            d: 16,
            heads: 2,
            lff_dim: 8,
            multiscale: false,
            ..ModelConfig::default()
        };
        let store: ParameterStore<f64> = init_params(&cfg).unwrap();
        assert!(!store.contains("ic.proj_s.w"));
        assert!(!store.contains("dec.mix"));
        assert!(store.contains("ic.proj_l.w"));
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ModelConfig { dim: 2, shift_in_film: true, ..ModelConfig::default() };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ModelConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        assert!(serde_json::from_str::<ModelConfig>("{\"unknown_knob\":3}").is_err());
    }
}
