//! Attention encoder blocks and time-conditioned modulation blocks.
//!
//! Both block types are post-norm: each sublayer's output joins its input
//! through a residual sum before the normalization. The modulation block is
//! where query time enters; it gates the latent multiplicatively with a
//! transformed coordinate encoding, so one encoded latent can serve any
//! number of query times.

use super::encoding::{linear, pid, BoundParams};
use crate::array::graph::{Graph, NodeId};
use crate::array::{Result, Scalar};

/// Variance guard inside layer normalization.
pub const LN_EPS: f64 = 1e-5;

/// Normalize along the feature axis, then apply the learned gain and shift.
pub fn layer_norm_affine<T: Scalar>(
    g: &mut Graph<T>,
    pm: &BoundParams,
    prefix: &str,
    x: NodeId,
) -> Result<NodeId> {
    let n = g.layer_norm(x, LN_EPS)?;
    let scaled = g.mul_row(n, pid(pm, &format!("{prefix}.g"))?)?;
    g.add_row(scaled, pid(pm, &format!("{prefix}.b"))?)
}

/// Two-layer MLP with a GELU between, named `{prefix}.l1` / `{prefix}.l2`.
pub fn mlp2<T: Scalar>(
    g: &mut Graph<T>,
    pm: &BoundParams,
    prefix: &str,
    x: NodeId,
) -> Result<NodeId> {
    let h = linear(g, pm, &format!("{prefix}.l1"), x)?;
    let h = g.gelu(h)?;
    linear(g, pm, &format!("{prefix}.l2"), h)
}

/// Projected multi-head linear attention: Q/K/V projections, the attention
/// kernel over `rows/seg_len` independent segments, and an output
/// projection.
pub fn attention_sublayer<T: Scalar>(
    g: &mut Graph<T>,
    pm: &BoundParams,
    prefix: &str,
    z: NodeId,
    seg_len: usize,
    heads: usize,
    eps: f64,
) -> Result<NodeId> {
    let q = linear(g, pm, &format!("{prefix}.attn.wq"), z)?;
    let k = linear(g, pm, &format!("{prefix}.attn.wk"), z)?;
    let v = linear(g, pm, &format!("{prefix}.attn.wv"), z)?;
    let a = g.linear_attention(q, k, v, seg_len, heads, eps)?;
    linear(g, pm, &format!("{prefix}.attn.wo"), a)
}

/// Encoder block: attention sublayer and MLP sublayer, each residual and
/// post-normalized. Shape preserving on [rows, d].
pub fn transformer_block<T: Scalar>(
    g: &mut Graph<T>,
    pm: &BoundParams,
    prefix: &str,
    z: NodeId,
    seg_len: usize,
    heads: usize,
    eps: f64,
) -> Result<NodeId> {
    let a = attention_sublayer(g, pm, prefix, z, seg_len, heads, eps)?;
    let r = g.add(z, a)?;
    let h1 = layer_norm_affine(g, pm, &format!("{prefix}.ln1"), r)?;
    let m = mlp2(g, pm, &format!("{prefix}.mlp"), h1)?;
    let r2 = g.add(h1, m)?;
    layer_norm_affine(g, pm, &format!("{prefix}.ln2"), r2)
}

/// Intermediate nodes of a modulation block, exposed so tests can probe the
/// gating stage directly.
pub struct ModulationParts {
    /// Normalized latent after the (optional) attention sublayer.
    pub h1: NodeId,
    /// Gated latent: σ(h1) times the conditioned gain, plus the conditioned
    /// shift when enabled.
    pub h2: NodeId,
    pub out: NodeId,
}

/// Modulation block conditioning latent tokens `z` on coordinate latents
/// `c_lat` (same shape). With attention disabled the sublayer is the
/// identity, leaving pure conditioning; with the shift enabled a second
/// conditioning MLP adds to the gated latent.
pub fn modulation_block<T: Scalar>(
    g: &mut Graph<T>,
    pm: &BoundParams,
    prefix: &str,
    c_lat: NodeId,
    z: NodeId,
    seg_len: usize,
    heads: usize,
    eps: f64,
    use_attention: bool,
    shift_in_film: bool,
) -> Result<ModulationParts> {
    let a = if use_attention {
        attention_sublayer(g, pm, prefix, z, seg_len, heads, eps)?
    } else {
        z
    };
    let r = g.add(z, a)?;
    let h1 = layer_norm_affine(g, pm, &format!("{prefix}.ln1"), r)?;

    let gain = mlp2(g, pm, &format!("{prefix}.cond"), c_lat)?;
    let sig = g.elu(h1)?;
    let sig = g.add_scalar(sig, 1.0)?;
    let mut h2 = g.mul(sig, gain)?;
    if shift_in_film {
        let shift = mlp2(g, pm, &format!("{prefix}.shift"), c_lat)?;
        h2 = g.add(h2, shift)?;
    }

    let m = mlp2(g, pm, &format!("{prefix}.mlp"), h2)?;
    let r2 = g.add(h1, m)?;
    let out = layer_norm_affine(g, pm, &format!("{prefix}.ln2"), r2)?;
    Ok(ModulationParts { h1, h2, out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::Array;
    use crate::model::encoding::bind_params;
    use crate::model::params::{draw_uniform, ParameterStore};
    use crate::model::{init_params, ModelConfig};
    use crate::rng::Rng;

    fn small_cfg() -> ModelConfig {
        ModelConfig { d: 8, heads: 2, n_enc: 1, n_mod: 1, ..ModelConfig::default() }
    }

    fn store_for(cfg: &ModelConfig) -> ParameterStore<f64> {
        init_params(cfg).unwrap()
    }

    #[test]
    fn transformer_block_preserves_shape() {
        let cfg = small_cfg();
        let store = store_for(&cfg);
        let mut g = Graph::new();
        let pm = bind_params(&mut g, &store, false).unwrap();
        let z = g.constant(draw_uniform::<f64>(&mut Rng::new(1, 0), &[12, 8], 1.0));
        let out = transformer_block(&mut g, &pm, "enc0", z, 6, 2, 0.0).unwrap();
        assert_eq!(g.value(out).unwrap().shape(), &[12, 8]);
    }

    #[test]
    fn transformer_block_is_permutation_equivariant() {
        let cfg = small_cfg();
        let store = store_for(&cfg);
        let mut rng = Rng::new(2, 0);
        let z_val = draw_uniform::<f64>(&mut rng, &[10, 8], 1.0);
        let mut base = Graph::new();
        let pm = bind_params(&mut base, &store, false).unwrap();
        let z = base.constant(z_val.clone());
        let out = transformer_block(&mut base, &pm, "enc0", z, 10, 2, 0.0).unwrap();
        let out_val = base.value(out).unwrap().clone();

        for trial in 0..5 {
            let mut perm: Vec<usize> = (0..10).collect();
            rng.shuffle(&mut perm);
            let zp = z_val.gather_rows(&perm).unwrap();
            let mut g = Graph::new();
            let pm = bind_params(&mut g, &store, false).unwrap();
            let zn = g.constant(zp);
            let op = transformer_block(&mut g, &pm, "enc0", zn, 10, 2, 0.0).unwrap();
            let want = out_val.gather_rows(&perm).unwrap();
            let diff = g.value(op).unwrap().sub(&want).unwrap().max_abs();
            assert!(diff < 1e-12, "trial {trial}: {diff:.3e}");
        }
    }

    fn run_modulation(
        store: &ParameterStore<f64>,
        c_val: &Array<f64>,
        z_val: &Array<f64>,
        use_attention: bool,
        shift: bool,
    ) -> (Array<f64>, Array<f64>, Array<f64>) {
        let mut g = Graph::new();
        let pm = bind_params(&mut g, store, false).unwrap();
        let c = g.constant(c_val.clone());
        let z = g.constant(z_val.clone());
        let parts =
            modulation_block(&mut g, &pm, "mod0", c, z, z_val.shape()[0], 2, 0.0, use_attention, shift)
                .unwrap();
        (
            g.value(parts.h1).unwrap().clone(),
            g.value(parts.h2).unwrap().clone(),
            g.value(parts.out).unwrap().clone(),
        )
    }

    #[test]
    fn unit_gain_passes_the_activated_latent_through() {
        let cfg = small_cfg();
        let mut store = store_for(&cfg);
        store.set("mod0.cond.l1.w", Array::zeros(&[8, 16])).unwrap();
        store.set("mod0.cond.l2.w", Array::zeros(&[16, 8])).unwrap();
        store.set("mod0.cond.l2.b", Array::full(&[8], 1.0)).unwrap();
        let mut rng = Rng::new(3, 0);
        let c = draw_uniform(&mut rng, &[6, 8], 1.0);
        let z = draw_uniform(&mut rng, &[6, 8], 1.0);
        let (h1, h2, _) = run_modulation(&store, &c, &z, true, false);
        let want = h1.elu().unwrap().add_scalar(1.0).unwrap();
        assert!(h2.sub(&want).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn zero_gain_blocks_the_latent() {
        let cfg = small_cfg();
        let mut store = store_for(&cfg);
        store.set("mod0.cond.l1.w", Array::zeros(&[8, 16])).unwrap();
        store.set("mod0.cond.l2.w", Array::zeros(&[16, 8])).unwrap();
        let mut rng = Rng::new(4, 0);
        let c = draw_uniform(&mut rng, &[6, 8], 1.0);
        let z = draw_uniform(&mut rng, &[6, 8], 1.0);
        let (_, h2, _) = run_modulation(&store, &c, &z, true, false);
        assert!(h2.max_abs() == 0.0);
    }

    #[test]
    fn conditioned_shift_survives_a_zero_gain() {
        let cfg = ModelConfig { shift_in_film: true, ..small_cfg() };
        let mut store = store_for(&cfg);
        store.set("mod0.cond.l1.w", Array::zeros(&[8, 16])).unwrap();
        store.set("mod0.cond.l2.w", Array::zeros(&[16, 8])).unwrap();
        store.set("mod0.shift.l1.w", Array::zeros(&[8, 16])).unwrap();
        store.set("mod0.shift.l2.w", Array::zeros(&[16, 8])).unwrap();
        store.set("mod0.shift.l2.b", Array::full(&[8], 0.25)).unwrap();
        let mut rng = Rng::new(5, 0);
        let c = draw_uniform(&mut rng, &[6, 8], 1.0);
        let z = draw_uniform(&mut rng, &[6, 8], 1.0);
        let (_, h2, _) = run_modulation(&store, &c, &z, true, true);
        assert!(h2.add_scalar(-0.25).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn conditioning_responds_to_the_coordinates() {
        let cfg = small_cfg();
        let store = store_for(&cfg);
        let mut rng = Rng::new(6, 0);
        let z = draw_uniform(&mut rng, &[6, 8], 1.0);
        let c1 = draw_uniform(&mut rng, &[6, 8], 1.0);
        let c2 = draw_uniform(&mut rng, &[6, 8], 1.0);
        let (_, _, out1) = run_modulation(&store, &c1, &z, true, false);
        let (_, _, out2) = run_modulation(&store, &c2, &z, true, false);
        assert!(out1.sub(&out2).unwrap().max_abs() > 1e-6);
    }

    #[test]
    fn attention_free_block_still_conditions() {
        let cfg = ModelConfig { use_attention: false, ..small_cfg() };
        let store = store_for(&cfg);
        assert!(!store.contains("mod0.attn.wq.w"));
        let mut rng = Rng::new(7, 0);
        let z = draw_uniform(&mut rng, &[6, 8], 1.0);
        let c1 = draw_uniform(&mut rng, &[6, 8], 1.0);
        let c2 = draw_uniform(&mut rng, &[6, 8], 1.0);
        let (_, _, out1) = run_modulation(&store, &c1, &z, false, false);
        let (_, _, out2) = run_modulation(&store, &c2, &z, false, false);
        assert!(out1.sub(&out2).unwrap().max_abs() > 1e-6);
        assert_eq!(out1.shape(), &[6, 8]);
    }
}
