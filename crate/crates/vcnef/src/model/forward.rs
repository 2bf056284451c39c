//! Full forward pass: encode the initial condition once, then modulate and
//! decode for any set of query times.
//!
//! Two execution modes share every kernel. Parallel mode replicates the
//! encoded latent across all query times inside one graph, so training can
//! backpropagate through the whole prediction at once. Sequential mode
//! walks the query times one small graph at a time against the frozen
//! encoder output, holding peak memory flat no matter how many times are
//! queried. Each latent row is processed independently by every op, so the
//! two modes produce identical bits.

use std::sync::Arc;

use super::blocks;
use super::encoding::{self, bind_params, BoundParams};
use super::params::ParameterStore;
use super::{init_params, ModelConfig};
use crate::array::graph::{Graph, NodeId};
use crate::array::{Array, ArrayError, Result, Scalar};

/// Spatial sampling the model runs on: explicit unit-interval points in 1D,
/// a unit-square cell grid in 2D.
#[derive(Debug, Clone)]
pub enum GridSpec {
    One { xs: Vec<f64> },
    Two { sx: usize, sy: usize },
}

impl GridSpec {
    pub fn line(xs: Vec<f64>) -> Self {
        GridSpec::One { xs }
    }

    pub fn plane(sx: usize, sy: usize) -> Self {
        GridSpec::Two { sx, sy }
    }

    pub fn n_points(&self) -> usize {
        match self {
            GridSpec::One { xs } => xs.len(),
            GridSpec::Two { sx, sy } => sx * sy,
        }
    }
}

/// One solution's inputs: sampled initial condition, PDE parameters, and
/// normalized query times in (0, 1].
#[derive(Clone, Copy)]
pub struct BatchItem<'a, T: Scalar> {
    pub u0: &'a Array<T>,
    pub p: &'a [f64],
    pub times: &'a [f64],
}

fn check_items<T: Scalar>(
    cfg: &ModelConfig,
    grid: &GridSpec,
    batch: &[BatchItem<T>],
) -> Result<()> {
    let fail = |what: String| Err(ArrayError::Invalid { op: "forward", what });
    if batch.is_empty() {
        return fail("empty batch".into());
    }
    if matches!(grid, GridSpec::Two { .. }) != (cfg.dim == 2) {
        return fail("grid dimensionality does not match the model".into());
    }
    let n_pts = grid.n_points();
    for (b, item) in batch.iter().enumerate() {
        if item.times.is_empty() {
            return fail(format!("item {b} has no query times"));
        }
        for &t in item.times {
            if !(t > 0.0 && t <= 1.0 + 1e-9) {
                return fail(format!("item {b} queries t={t}, outside the normalized (0, 1]"));
            }
        }
        let shape = item.u0.shape();
        if shape.len() != 2 || shape[0] != n_pts || shape[1] != cfg.c {
            return fail(format!(
                "item {b} field shape {shape:?} does not match {n_pts} points of {} channels",
                cfg.c
            ));
        }
        if item.p.len() != cfg.j {
            return fail(format!("item {b} carries {} parameters, model expects {}", item.p.len(), cfg.j));
        }
    }
    Ok(())
}

/// Latent tokens per sample entering attention segments.
pub fn tokens_per_sample(cfg: &ModelConfig, grid: &GridSpec) -> Result<usize> {
    match grid {
        GridSpec::One { xs } => Ok(xs.len()),
        GridSpec::Two { sx, sy } => encoding::token_count_2d(cfg, *sx, *sy),
    }
}

/// Encodes every item's initial condition and runs the encoder stack.
/// Output is [batch·n_tok, d] with one attention segment per item; nothing
/// here depends on query times.
pub fn build_encoder<T: Scalar>(
    g: &mut Graph<T>,
    pm: &BoundParams,
    cfg: &ModelConfig,
    grid: &GridSpec,
    batch: &[BatchItem<T>],
) -> Result<NodeId> {
    let mut tokens = Vec::with_capacity(batch.len());
    for item in batch {
        let t = match grid {
            GridSpec::One { xs } => encoding::encode_ic_1d(g, pm, item.u0, xs, item.p)?,
            GridSpec::Two { sx, sy } => {
                encoding::encode_ic_2d(g, pm, cfg, item.u0, item.p, *sx, *sy)?
            }
        };
        tokens.push(t);
    }
    let mut z = if tokens.len() == 1 { tokens[0] } else { g.concat_rows(&tokens)? };
    let n_tok = tokens_per_sample(cfg, grid)?;
    let eps = cfg.attention_eps::<T>();
    for i in 0..cfg.n_enc {
        z = blocks::transformer_block(g, pm, &format!("enc{i}"), z, n_tok, cfg.heads, eps)?;
    }
    Ok(z)
}

/// Coordinate latents for every (item, time) pair, [total_times·n_tok, d],
/// ordered to line up with the replicated encoder output.
pub fn build_coords<T: Scalar>(
    g: &mut Graph<T>,
    pm: &BoundParams,
    cfg: &ModelConfig,
    grid: &GridSpec,
    batch: &[BatchItem<T>],
) -> Result<NodeId> {
    match grid {
        GridSpec::One { xs } => {
            let mut parts = Vec::with_capacity(batch.len());
            for item in batch {
                parts.push(encoding::coord_inputs_1d::<T>(item.times, xs)?);
            }
            let refs: Vec<&Array<T>> = parts.iter().collect();
            let input = g.constant(Array::concat_rows(&refs)?);
            encoding::linear(g, pm, "coord", input)
        }
        GridSpec::Two { sx, sy } => {
            let mut parts = Vec::with_capacity(batch.len());
            for item in batch {
                parts.push(encoding::encode_coords_2d(g, pm, cfg, item.times, *sx, *sy)?);
            }
            if parts.len() == 1 {
                Ok(parts[0])
            } else {
                g.concat_rows(&parts)
            }
        }
    }
}

/// Runs the modulation stack over replicated latents `z` against coordinate
/// latents `coords` of the same shape, one attention segment per query.
pub fn build_modulated<T: Scalar>(
    g: &mut Graph<T>,
    pm: &BoundParams,
    cfg: &ModelConfig,
    z: NodeId,
    coords: NodeId,
    seg_len: usize,
) -> Result<NodeId> {
    let eps = cfg.attention_eps::<T>();
    let mut h = z;
    for i in 0..cfg.n_mod {
        h = blocks::modulation_block(
            g,
            pm,
            &format!("mod{i}"),
            coords,
            h,
            seg_len,
            cfg.heads,
            eps,
            cfg.use_attention,
            cfg.shift_in_film,
        )?
        .out;
    }
    Ok(h)
}

/// Maps modulated tokens back to field values, [n_seg·n_points, c].
pub fn build_decoder<T: Scalar>(
    g: &mut Graph<T>,
    pm: &BoundParams,
    cfg: &ModelConfig,
    grid: &GridSpec,
    z: NodeId,
    n_seg: usize,
) -> Result<NodeId> {
    match grid {
        GridSpec::One { .. } => encoding::decode_1d(g, pm, z),
        GridSpec::Two { sx, sy } => encoding::decode_2d(g, pm, cfg, z, n_seg, *sx, *sy),
    }
}

/// Whole forward pass over a batch in parallel mode. Output rows follow
/// (item, time, point) order: [Σ_item n_times·n_points, c].
pub fn build_forward<T: Scalar>(
    g: &mut Graph<T>,
    pm: &BoundParams,
    cfg: &ModelConfig,
    grid: &GridSpec,
    batch: &[BatchItem<T>],
) -> Result<NodeId> {
    check_items(cfg, grid, batch)?;
    let n_tok = tokens_per_sample(cfg, grid)?;
    let z_enc = build_encoder(g, pm, cfg, grid, batch)?;

    let total_times: usize = batch.iter().map(|item| item.times.len()).sum();
    let mut rep = Vec::with_capacity(total_times * n_tok);
    for (b, item) in batch.iter().enumerate() {
        for _ in item.times {
            rep.extend(b * n_tok..(b + 1) * n_tok);
        }
    }
    let z_rep = g.gather_rows(z_enc, Arc::new(rep))?;
    let coords = build_coords(g, pm, cfg, grid, batch)?;
    let z_mod = build_modulated(g, pm, cfg, z_rep, coords, n_tok)?;
    build_decoder(g, pm, cfg, grid, z_mod, total_times)
}

/// A config plus its parameters; the unit everything downstream trains,
/// evaluates, and serializes.
#[derive(Debug, Clone)]
pub struct Model<T: Scalar> {
    pub cfg: ModelConfig,
    pub store: ParameterStore<T>,
}

impl<T: Scalar> Model<T> {
    /// Fresh model with parameters drawn from the config's seed.
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        let store = init_params(&cfg)?;
        Ok(Model { cfg, store })
    }

    /// Wraps existing parameters, checking them name by name against what
    /// the config would create.
    pub fn from_parts(cfg: ModelConfig, store: ParameterStore<T>) -> Result<Self> {
        let expected: ParameterStore<T> = init_params(&cfg)?;
        if expected.len() != store.len() {
            return Err(ArrayError::Graph {
                what: format!(
                    "parameter count {} does not match the config's {}",
                    store.len(),
                    expected.len()
                ),
            });
        }
        for ((en, ep), (sn, sp)) in expected.iter().zip(store.iter()) {
            if en != sn || ep.value.shape() != sp.value.shape() {
                return Err(ArrayError::Graph {
                    what: format!(
                        "parameter '{sn}' {:?} does not match expected '{en}' {:?}",
                        sp.value.shape(),
                        ep.value.shape()
                    ),
                });
            }
        }
        Ok(Model { cfg, store })
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model { cfg: self.cfg.clone(), store: self.store.cast() }
    }

    /// Predicts all query times in one graph: [n_times, n_points, c].
    pub fn forward(&self, grid: &GridSpec, item: BatchItem<T>) -> Result<Array<T>> {
        let rows = self.forward_batch(grid, &[item])?;
        rows.reshape(&[item.times.len(), grid.n_points(), self.cfg.c])
    }

    /// Batched parallel-mode prediction, raw rows [Σ n_times·n_points, c].
    pub fn forward_batch(&self, grid: &GridSpec, batch: &[BatchItem<T>]) -> Result<Array<T>> {
        let mut g = Graph::new();
        let pm = bind_params(&mut g, &self.store, false)?;
        let out = build_forward(&mut g, &pm, &self.cfg, grid, batch)?;
        Ok(g.value(out)?.clone())
    }

    /// Predicts query times one at a time against the once-computed encoder
    /// latent. Matches [`Model::forward`] bit for bit while keeping peak
    /// memory independent of the number of query times.
    pub fn forward_sequential(&self, grid: &GridSpec, item: BatchItem<T>) -> Result<Array<T>> {
        check_items(&self.cfg, grid, &[item])?;
        let n_tok = tokens_per_sample(&self.cfg, grid)?;
        let z_val = {
            let mut g = Graph::new();
            let pm = bind_params(&mut g, &self.store, false)?;
            let z = build_encoder(&mut g, &pm, &self.cfg, grid, &[item])?;
            g.value(z)?.clone()
        };

        let mut steps = Vec::with_capacity(item.times.len());
        for &t in item.times {
            let mut g = Graph::new();
            let pm = bind_params(&mut g, &self.store, false)?;
            let z = g.constant(z_val.clone());
            let single = [t];
            let step = BatchItem { times: &single, ..item };
            let coords = build_coords(&mut g, &pm, &self.cfg, grid, &[step])?;
            let z_mod = build_modulated(&mut g, &pm, &self.cfg, z, coords, n_tok)?;
            let out = build_decoder(&mut g, &pm, &self.cfg, grid, z_mod, 1)?;
            steps.push(g.value(out)?.clone());
        }
        let refs: Vec<&Array<T>> = steps.iter().collect();
        Array::concat_rows(&refs)?.reshape(&[item.times.len(), grid.n_points(), self.cfg.c])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::draw_uniform;
    use crate::rng::Rng;

    fn line_grid(s: usize) -> GridSpec {
        GridSpec::line((0..s).map(|i| i as f64 / s as f64).collect())
    }

    fn small_model() -> Model<f64> {
        Model::new(ModelConfig { d: 16, heads: 2, n_enc: 1, n_mod: 1, ..ModelConfig::default() })
            .unwrap()
    }

    fn random_field(rng: &mut Rng, s: usize, c: usize) -> Array<f64> {
        draw_uniform(rng, &[s, c], 0.5)
    }

    #[test]
    fn parallel_output_has_one_block_per_query_time() {
        let model = small_model();
        let grid = line_grid(32);
        let u0 = random_field(&mut Rng::new(1, 0), 32, 1);
        let times = [0.2, 0.4, 0.6, 0.8, 1.0];
        let out = model
            .forward(&grid, BatchItem { u0: &u0, p: &[0.4], times: &times })
            .unwrap();
        assert_eq!(out.shape(), &[5, 32, 1]);
    }

    #[test]
    fn parallel_and_sequential_produce_identical_bits() {
        let model = small_model();
        let grid = line_grid(24);
        let u0 = random_field(&mut Rng::new(2, 0), 24, 1);
        let times = [0.25, 0.5, 0.75, 1.0];
        let item = BatchItem { u0: &u0, p: &[0.4], times: &times };
        let par = model.forward(&grid, item).unwrap();
        let seq = model.forward_sequential(&grid, item).unwrap();
        assert_eq!(par, seq);
    }

    #[test]
    fn reduced_precision_keeps_the_modes_in_step() {
        let model = small_model().cast::<f32>();
        let grid = line_grid(24);
        let u0 = random_field(&mut Rng::new(3, 0), 24, 1).cast::<f32>();
        let times = [0.3, 0.9];
        let item = BatchItem { u0: &u0, p: &[0.4], times: &times };
        let par = model.forward(&grid, item).unwrap();
        let seq = model.forward_sequential(&grid, item).unwrap();
        let diff = par.cast::<f64>().sub(&seq.cast::<f64>()).unwrap().max_abs();
        assert!(diff < 1e-6, "modes diverged by {diff:.3e}");
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let model = small_model();
        let grid = line_grid(16);
        let u0 = random_field(&mut Rng::new(4, 0), 16, 1);
        let err = |times: &[f64]| {
            model.forward(&grid, BatchItem { u0: &u0, p: &[0.4], times }).is_err()
        };
        assert!(err(&[]));
        assert!(err(&[0.0]));
        assert!(err(&[1.5]));
        assert!(err(&[-0.25]));
        let short = random_field(&mut Rng::new(4, 1), 12, 1);
        assert!(model
            .forward(&grid, BatchItem { u0: &short, p: &[0.4], times: &[0.5] })
            .is_err());
        assert!(model
            .forward(&grid, BatchItem { u0: &u0, p: &[0.4, 0.1], times: &[0.5] })
            .is_err());
    }

    #[test]
    fn query_grid_may_differ_from_the_field_grid_size_elsewhere() {
        let model = small_model();
        let u0 = random_field(&mut Rng::new(5, 0), 96, 1);
        let out = model
            .forward(&line_grid(96), BatchItem { u0: &u0, p: &[0.4], times: &[0.5] })
            .unwrap();
        assert_eq!(out.shape(), &[1, 96, 1]);
    }

    #[test]
    fn output_depends_on_the_query_time() {
        let model = small_model();
        let grid = line_grid(16);
        let u0 = random_field(&mut Rng::new(6, 0), 16, 1);
        let a = model.forward(&grid, BatchItem { u0: &u0, p: &[0.4], times: &[0.3] }).unwrap();
        let b = model.forward(&grid, BatchItem { u0: &u0, p: &[0.4], times: &[0.9] }).unwrap();
        assert!(a.sub(&b).unwrap().max_abs() > 1e-8);
    }

    #[test]
    fn whole_model_commutes_with_grid_permutations() {
        let model = small_model();
        let s = 20;
        let xs: Vec<f64> = (0..s).map(|i| i as f64 / s as f64).collect();
        let u0 = random_field(&mut Rng::new(7, 0), s, 1);
        let times = [0.4, 0.8];
        let base = model
            .forward(&GridSpec::line(xs.clone()), BatchItem { u0: &u0, p: &[0.4], times: &times })
            .unwrap();

        let mut rng = Rng::new(8, 0);
        let mut perm: Vec<usize> = (0..s).collect();
        rng.shuffle(&mut perm);
        let xsp: Vec<f64> = perm.iter().map(|&i| xs[i]).collect();
        let u0p = u0.gather_rows(&perm).unwrap();
        let permuted = model
            .forward(&GridSpec::line(xsp), BatchItem { u0: &u0p, p: &[0.4], times: &times })
            .unwrap();

        for t in 0..2 {
            let slice = base.data()[t * s..(t + 1) * s].to_vec();
            let want: Vec<f64> = perm.iter().map(|&i| slice[i]).collect();
            let got = &permuted.data()[t * s..(t + 1) * s];
            for (a, b) in want.iter().zip(got) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn batch_rows_match_independent_forwards() {
        let model = small_model();
        let grid = line_grid(16);
        let mut rng = Rng::new(9, 0);
        let u0a = random_field(&mut rng, 16, 1);
        let u0b = random_field(&mut rng, 16, 1);
        let ta = [0.5, 1.0];
        let tb = [0.25];
        let item_a = BatchItem { u0: &u0a, p: &[0.2], times: &ta };
        let item_b = BatchItem { u0: &u0b, p: &[0.4], times: &tb };
        let joint = model.forward_batch(&grid, &[item_a, item_b]).unwrap();
        let solo_a = model.forward_batch(&grid, &[item_a]).unwrap();
        let solo_b = model.forward_batch(&grid, &[item_b]).unwrap();
        let want = Array::concat_rows(&[&solo_a, &solo_b]).unwrap();
        assert_eq!(joint, want);
    }

    #[test]
    fn two_dimensional_forward_matches_modes() {
        let cfg = ModelConfig {
            dim: 2,
            d: 8,
            heads: 2,
            n_enc: 1,
            n_mod: 1,
            lff_dim: 4,
            patch_small: 2,
            patch_large: 2,
            multiscale: false,
            ..ModelConfig::default()
        };
        let model: Model<f64> = Model::new(cfg).unwrap();
        let grid = GridSpec::plane(4, 4);
        let u0 = random_field(&mut Rng::new(10, 0), 16, 1);
        let times = [0.5, 1.0];
        let item = BatchItem { u0: &u0, p: &[0.1], times: &times };
        let par = model.forward(&grid, item).unwrap();
        assert_eq!(par.shape(), &[2, 16, 1]);
        let seq = model.forward_sequential(&grid, item).unwrap();
        assert_eq!(par, seq);
    }
}
