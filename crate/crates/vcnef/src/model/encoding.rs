//! Token construction: coordinate encodings, initial-condition encodings,
//! and the matching decoders.
//!
//! All spatial coordinates reaching the model live on the unit interval or
//! unit square, so a trained model is tied to a domain but not to a grid
//! resolution. Query times are normalized to (0, 1] by the caller before
//! they get here.

use std::sync::Arc;

use indexmap::IndexMap;

use super::params::ParameterStore;
use super::ModelConfig;
use crate::array::graph::{Graph, NodeId};
use crate::array::{Array, ArrayError, Result, Scalar};

/// Parameter name to graph node, produced by [`bind_params`].
pub type BoundParams = IndexMap<String, NodeId>;

/// Registers every parameter with a graph. With `as_leaves` set, trainable
/// parameters become named leaves (so `backward` reports their gradients)
/// and frozen ones become constants; otherwise everything is a constant.
pub fn bind_params<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParameterStore<T>,
    as_leaves: bool,
) -> Result<BoundParams> {
    let mut map = IndexMap::new();
    for (name, param) in store.iter() {
        let id = if as_leaves && param.trainable {
            g.leaf(name, param.value.clone())?
        } else {
            g.constant(param.value.clone())
        };
        map.insert(name.to_string(), id);
    }
    Ok(map)
}

pub fn pid(pm: &BoundParams, name: &str) -> Result<NodeId> {
    pm.get(name)
        .copied()
        .ok_or_else(|| ArrayError::Graph { what: format!("parameter '{name}' is not bound") })
}

/// Applies the linear layer registered under `{prefix}.w` / `{prefix}.b`.
pub fn linear<T: Scalar>(
    g: &mut Graph<T>,
    pm: &BoundParams,
    prefix: &str,
    x: NodeId,
) -> Result<NodeId> {
    let h = g.matmul(x, pid(pm, &format!("{prefix}.w"))?)?;
    g.add_row(h, pid(pm, &format!("{prefix}.b"))?)
}

// ── Time encoding ──────────────────────────────────────────────────────────

/// Interleaved sinusoidal embedding of a continuous time value: slot 2k is
/// sin(t·w_k), slot 2k+1 is cos(t·w_k) with w_k = 10000^(-2k/d). At t = 0
/// the sin slots read 0 and the cos slots read 1.
pub fn positional_encode_time(t: f64, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    for k in 0..d / 2 {
        let freq = (-((2 * k) as f64) / d as f64 * 10000f64.ln()).exp();
        out[2 * k] = (t * freq).sin();
        out[2 * k + 1] = (t * freq).cos();
    }
    out
}

// ── 1D encodings ───────────────────────────────────────────────────────────

/// Rows (t ∥ x_i) for every query time and grid point, time-major: all of
/// time 0's points, then time 1's, matching the segment layout downstream.
pub fn coord_inputs_1d<T: Scalar>(times: &[f64], xs: &[f64]) -> Result<Array<T>> {
    if times.is_empty() || xs.is_empty() {
        return Err(ArrayError::Invalid { op: "coord_inputs_1d", what: "empty inputs".into() });
    }
    let mut data = Vec::with_capacity(times.len() * xs.len() * 2);
    for &t in times {
        for &x in xs {
            data.push(T::from_f64(t));
            data.push(T::from_f64(x));
        }
    }
    Array::from_vec(vec![times.len() * xs.len(), 2], data)
}

/// Projects 1D query coordinates to latent width: row i of the result is
/// (t ∥ x_i)W + b. Output is [n_times·s, d].
pub fn encode_coords_1d<T: Scalar>(
    g: &mut Graph<T>,
    pm: &BoundParams,
    times: &[f64],
    xs: &[f64],
) -> Result<NodeId> {
    let input = g.constant(coord_inputs_1d(times, xs)?);
    linear(g, pm, "coord", input)
}

/// Rows (u0_i ∥ x_i ∥ p): the sampled field, its position, and the PDE
/// parameters, one row per grid point.
pub fn ic_inputs_1d<T: Scalar>(u0: &Array<T>, xs: &[f64], p: &[f64]) -> Result<Array<T>> {
    let shape = u0.shape();
    if shape.len() != 2 || shape[0] != xs.len() {
        return Err(ArrayError::Invalid {
            op: "ic_inputs_1d",
            what: format!("field shape {shape:?} does not match {} grid points", xs.len()),
        });
    }
    let c = shape[1];
    let width = c + 1 + p.len();
    let mut data = Vec::with_capacity(xs.len() * width);
    for (i, &x) in xs.iter().enumerate() {
        data.extend_from_slice(&u0.data()[i * c..(i + 1) * c]);
        data.push(T::from_f64(x));
        data.extend(p.iter().map(|&v| T::from_f64(v)));
    }
    Array::from_vec(vec![xs.len(), width], data)
}

/// Projects the initial condition to latent tokens, one per grid point. No
/// time enters here; the result is reused for every query time.
pub fn encode_ic_1d<T: Scalar>(
    g: &mut Graph<T>,
    pm: &BoundParams,
    u0: &Array<T>,
    xs: &[f64],
    p: &[f64],
) -> Result<NodeId> {
    let input = g.constant(ic_inputs_1d(u0, xs, p)?);
    linear(g, pm, "ic", input)
}

/// Pointwise two-layer readout from latent tokens to field channels.
pub fn decode_1d<T: Scalar>(g: &mut Graph<T>, pm: &BoundParams, z: NodeId) -> Result<NodeId> {
    let h = linear(g, pm, "dec.l1", z)?;
    let h = g.gelu(h)?;
    linear(g, pm, "dec.l2", h)
}

// ── 2D encodings ───────────────────────────────────────────────────────────

/// Cell-center coordinates of an sx × sy unit-square grid, row-major with y
/// outer, as rows (x, y).
pub fn unit_grid_2d<T: Scalar>(sx: usize, sy: usize) -> Result<Array<T>> {
    if sx == 0 || sy == 0 {
        return Err(ArrayError::Invalid { op: "unit_grid_2d", what: "empty grid".into() });
    }
    let mut data = Vec::with_capacity(sx * sy * 2);
    for iy in 0..sy {
        for ix in 0..sx {
            data.push(T::from_f64((ix as f64 + 0.5) / sx as f64));
            data.push(T::from_f64((iy as f64 + 0.5) / sy as f64));
        }
    }
    Array::from_vec(vec![sx * sy, 2], data)
}

/// Grid-row indices grouped patch by patch: patches scan row-major over the
/// grid, points scan row-major inside each patch. Gathering with this list
/// and reshaping turns a [sx·sy, w] point matrix into a [n_patch, p²·w]
/// patch matrix.
pub fn patch_indices(sx: usize, sy: usize, p: usize) -> Result<Vec<usize>> {
    if p == 0 || sx % p != 0 || sy % p != 0 {
        return Err(ArrayError::Invalid {
            op: "patch_indices",
            what: format!("patch edge {p} does not tile a {sx}x{sy} grid"),
        });
    }
    let mut idx = Vec::with_capacity(sx * sy);
    for py in 0..sy / p {
        for px in 0..sx / p {
            for dy in 0..p {
                for dx in 0..p {
                    idx.push((py * p + dy) * sx + px * p + dx);
                }
            }
        }
    }
    Ok(idx)
}

/// Tokens per query time for a 2D grid: small patches first, then large,
/// or only large when the config is single-scale.
pub fn token_count_2d(cfg: &ModelConfig, sx: usize, sy: usize) -> Result<usize> {
    let n_l = (sx / cfg.patch_large) * (sy / cfg.patch_large);
    if cfg.multiscale {
        let n_s = (sx / cfg.patch_small) * (sy / cfg.patch_small);
        Ok(n_s + n_l)
    } else {
        Ok(n_l)
    }
}

/// Raw Fourier features of coordinates: (cos(xW_r) ∥ sin(xW_r)) scaled by
/// the inverse square root of the feature width, which bounds each entry by
/// that scale and the row norm by one.
pub fn lff_features<T: Scalar>(
    g: &mut Graph<T>,
    pm: &BoundParams,
    coords: NodeId,
) -> Result<NodeId> {
    let f = g.matmul(coords, pid(pm, "coord.lff.wr")?)?;
    let cosf = g.cos(f)?;
    let sinf = g.sin(f)?;
    let feat = g.concat_cols(&[cosf, sinf])?;
    let width = g.value(feat)?.shape()[1];
    g.scale(feat, 1.0 / (width as f64).sqrt())
}

/// Fourier features followed by the two-layer embedding network.
pub fn lff_apply<T: Scalar>(g: &mut Graph<T>, pm: &BoundParams, coords: NodeId) -> Result<NodeId> {
    let feat = lff_features(g, pm, coords)?;
    let h = linear(g, pm, "coord.lff.l1", feat)?;
    let h = g.gelu(h)?;
    linear(g, pm, "coord.lff.l2", h)
}

fn replicate_row<T: Scalar>(row: &[f64], n: usize) -> Result<Array<T>> {
    let mut data = Vec::with_capacity(n * row.len());
    for _ in 0..n {
        data.extend(row.iter().map(|&v| T::from_f64(v)));
    }
    Array::from_vec(vec![n, row.len()], data)
}

/// Mean-pooling matrix over patches: row per patch, 1/p² at its members.
fn pool_matrix<T: Scalar>(idx: &[usize], n_patch: usize, n_pts: usize) -> Result<Array<T>> {
    let per = idx.len() / n_patch;
    let w = T::from_f64(1.0 / per as f64);
    let mut data = vec![T::zero(); n_patch * n_pts];
    for (k, &src) in idx.iter().enumerate() {
        data[(k / per) * n_pts + src] = w;
    }
    Array::from_vec(vec![n_patch, n_pts], data)
}

/// Projects 2D query coordinates to latent tokens for each query time.
///
/// Each grid point's position runs through the Fourier embedding once.
/// Small-patch tokens concatenate the time encoding with all member
/// embeddings; large-patch tokens mean-pool the member embeddings first so
/// the projection width stays independent of the patch area. Output is
/// [n_times·n_tok, d] with each time's small tokens ahead of its large
/// ones.
pub fn encode_coords_2d<T: Scalar>(
    g: &mut Graph<T>,
    pm: &BoundParams,
    cfg: &ModelConfig,
    times: &[f64],
    sx: usize,
    sy: usize,
) -> Result<NodeId> {
    if times.is_empty() {
        return Err(ArrayError::Invalid { op: "encode_coords_2d", what: "no query times".into() });
    }
    let coords = g.constant(unit_grid_2d::<T>(sx, sy)?);
    let lff = lff_apply(g, pm, coords)?;
    let n_pts = sx * sy;

    let small = if cfg.multiscale {
        let idx = patch_indices(sx, sy, cfg.patch_small)?;
        let n_s = idx.len() / (cfg.patch_small * cfg.patch_small);
        let gathered = g.gather_rows(lff, Arc::new(idx))?;
        Some((g.reshape(gathered, &[n_s, cfg.patch_small * cfg.patch_small * cfg.lff_dim])?, n_s))
    } else {
        None
    };
    let idx_l = patch_indices(sx, sy, cfg.patch_large)?;
    let n_l = idx_l.len() / (cfg.patch_large * cfg.patch_large);
    let pool = g.constant(pool_matrix::<T>(&idx_l, n_l, n_pts)?);
    let large = g.matmul(pool, lff)?;

    let mut per_time = Vec::with_capacity(times.len());
    for &t in times {
        let pe = positional_encode_time(t, cfg.d);
        let mut toks = Vec::new();
        if let Some((feat_s, n_s)) = small {
            let pe_s = g.constant(replicate_row::<T>(&pe, n_s)?);
            let joined = g.concat_cols(&[pe_s, feat_s])?;
            toks.push(linear(g, pm, "coord.proj_s", joined)?);
        }
        let pe_l = g.constant(replicate_row::<T>(&pe, n_l)?);
        let joined = g.concat_cols(&[pe_l, large])?;
        toks.push(linear(g, pm, "coord.proj_l", joined)?);
        per_time.push(g.concat_rows(&toks)?);
    }
    if per_time.len() == 1 {
        Ok(per_time[0])
    } else {
        g.concat_rows(&per_time)
    }
}

fn encode_ic_patches<T: Scalar>(
    g: &mut Graph<T>,
    pm: &BoundParams,
    prefix: &str,
    u0: NodeId,
    p: &[f64],
    sx: usize,
    sy: usize,
    edge: usize,
    c: usize,
) -> Result<NodeId> {
    let idx = patch_indices(sx, sy, edge)?;
    let n_patch = idx.len() / (edge * edge);
    let gathered = g.gather_rows(u0, Arc::new(idx))?;
    let patches = g.reshape(gathered, &[n_patch, edge * edge * c])?;
    let joined = if p.is_empty() {
        patches
    } else {
        let pc = g.constant(replicate_row::<T>(p, n_patch)?);
        g.concat_cols(&[patches, pc])?
    };
    linear(g, pm, prefix, joined)
}

/// Projects a 2D initial condition to latent tokens: each patch's flattened
/// field values plus the PDE parameters, no coordinates. Small tokens come
/// first, large after; single-scale configs keep only the large branch.
pub fn encode_ic_2d<T: Scalar>(
    g: &mut Graph<T>,
    pm: &BoundParams,
    cfg: &ModelConfig,
    u0: &Array<T>,
    p: &[f64],
    sx: usize,
    sy: usize,
) -> Result<NodeId> {
    let shape = u0.shape();
    if shape.len() != 2 || shape[0] != sx * sy || shape[1] != cfg.c {
        return Err(ArrayError::Invalid {
            op: "encode_ic_2d",
            what: format!("field shape {shape:?} does not match a {sx}x{sy} grid of {} channels", cfg.c),
        });
    }
    let u0c = g.constant(u0.clone());
    let large = encode_ic_patches(g, pm, "ic.proj_l", u0c, p, sx, sy, cfg.patch_large, cfg.c)?;
    if cfg.multiscale {
        let small = encode_ic_patches(g, pm, "ic.proj_s", u0c, p, sx, sy, cfg.patch_small, cfg.c)?;
        g.concat_rows(&[small, large])
    } else {
        Ok(large)
    }
}

fn decode_patches<T: Scalar>(
    g: &mut Graph<T>,
    pm: &BoundParams,
    prefix: &str,
    toks: NodeId,
    n_seg: usize,
    sx: usize,
    sy: usize,
    edge: usize,
    c: usize,
) -> Result<NodeId> {
    let fields = linear(g, pm, prefix, toks)?;
    let n_pts = sx * sy;
    let rows = g.reshape(fields, &[n_seg * n_pts, c])?;
    let scan = patch_indices(sx, sy, edge)?;
    let mut inv = vec![0usize; n_pts];
    for (k, &src) in scan.iter().enumerate() {
        inv[src] = k;
    }
    let mut perm = Vec::with_capacity(n_seg * n_pts);
    for seg in 0..n_seg {
        perm.extend(inv.iter().map(|&k| seg * n_pts + k));
    }
    g.gather_rows(rows, Arc::new(perm))
}

/// Reconstructs 2D fields from modulated tokens. Each scale's tokens map
/// back to their patches through a learned projection; with both scales
/// present the reconstructions blend under softmax weights of the mix
/// logits. Input is [n_seg·n_tok, d], output [n_seg·sx·sy, c] in grid
/// row-major order.
pub fn decode_2d<T: Scalar>(
    g: &mut Graph<T>,
    pm: &BoundParams,
    cfg: &ModelConfig,
    z: NodeId,
    n_seg: usize,
    sx: usize,
    sy: usize,
) -> Result<NodeId> {
    let n_tok = token_count_2d(cfg, sx, sy)?;
    let n_l = (sx / cfg.patch_large) * (sy / cfg.patch_large);
    if !cfg.multiscale {
        return decode_patches(g, pm, "dec.proj_l", z, n_seg, sx, sy, cfg.patch_large, cfg.c);
    }
    let n_s = n_tok - n_l;
    let mut small_idx = Vec::with_capacity(n_seg * n_s);
    let mut large_idx = Vec::with_capacity(n_seg * n_l);
    for seg in 0..n_seg {
        small_idx.extend(seg * n_tok..seg * n_tok + n_s);
        large_idx.extend(seg * n_tok + n_s..(seg + 1) * n_tok);
    }
    let toks_s = g.gather_rows(z, Arc::new(small_idx))?;
    let toks_l = g.gather_rows(z, Arc::new(large_idx))?;
    let recon_s = decode_patches(g, pm, "dec.proj_s", toks_s, n_seg, sx, sy, cfg.patch_small, cfg.c)?;
    let recon_l = decode_patches(g, pm, "dec.proj_l", toks_l, n_seg, sx, sy, cfg.patch_large, cfg.c)?;

    let mix = pid(pm, "dec.mix")?;
    let e = g.exp(mix)?;
    let s = g.sum_all(e)?;
    let w = g.div(e, s)?;
    let wm = g.reshape(w, &[2, 1])?;
    let w_s = g.slice_rows(wm, 0, 1)?;
    let w_l = g.slice_rows(wm, 1, 1)?;
    let part_s = g.mul(recon_s, w_s)?;
    let part_l = g.mul(recon_l, w_l)?;
    g.add(part_s, part_l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, params};
    use crate::rng::Rng;

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (i, (&x, &y)) in a.iter().zip(b).enumerate() {
            assert!((x - y).abs() <= tol, "entry {i}: {x} vs {y}");
        }
    }

    #[test]
    fn time_encoding_interleaves_and_separates_times() {
        let d = 64;
        let zero = positional_encode_time(0.0, d);
        for k in 0..d / 2 {
            assert_eq!(zero[2 * k], 0.0);
            assert_eq!(zero[2 * k + 1], 1.0);
        }
        let a = positional_encode_time(0.1, d);
        let b = positional_encode_time(0.2, d);
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
        let differing = a.iter().zip(&b).filter(|(x, y)| x != y).count();
        assert!(differing >= d / 2, "only {differing} of {d} slots distinguish the times");
    }

    #[test]
    fn coord_rows_follow_the_time_then_position_layout() {
        let d = 6;
        let mut w = Array::<f64>::zeros(&[2, d]);
        w.data_mut()[0] = 1.0;
        w.data_mut()[d + 1] = 1.0;
        let mut store: ParameterStore<f64> = ParameterStore::new();
        store.register("coord.w", w, true).unwrap();
        store.register("coord.b", Array::zeros(&[d]), true).unwrap();

        let mut g = Graph::new();
        let pm = bind_params(&mut g, &store, false).unwrap();
        let out = encode_coords_1d(&mut g, &pm, &[0.5], &[0.25, 0.75]).unwrap();
        let v = g.value(out).unwrap();
        assert_eq!(v.shape(), &[2, d]);
        assert_close(&v.data()[..d], &[0.5, 0.25, 0.0, 0.0, 0.0, 0.0], 0.0);
        assert_close(&v.data()[d..], &[0.5, 0.75, 0.0, 0.0, 0.0, 0.0], 0.0);
    }

    #[test]
    fn coord_encoding_shape_covers_all_query_pairs() {
        let cfg = ModelConfig { d: 96, heads: 4, ..ModelConfig::default() };
        let store: ParameterStore<f64> = init_params(&cfg).unwrap();
        let mut g = Graph::new();
        let pm = bind_params(&mut g, &store, false).unwrap();
        let times = [0.25, 0.5, 0.75, 1.0];
        let xs: Vec<f64> = (0..64).map(|i| i as f64 / 64.0).collect();
        let out = encode_coords_1d(&mut g, &pm, &times, &xs).unwrap();
        assert_eq!(g.value(out).unwrap().shape(), &[256, 96]);
    }

    #[test]
    fn coord_encoding_is_linear_in_the_parameters() {
        let cfg = ModelConfig { d: 8, heads: 2, ..ModelConfig::default() };
        let store: ParameterStore<f64> = init_params(&cfg).unwrap();
        let mut doubled = store.clone();
        let w2 = store.get("coord.w").unwrap().scale(2.0).unwrap();
        let b2 = store.get("coord.b").unwrap().scale(2.0).unwrap();
        doubled.set("coord.w", w2).unwrap();
        doubled.set("coord.b", b2).unwrap();

        let xs = [0.1, 0.4, 0.9];
        let mut g1 = Graph::new();
        let pm1 = bind_params(&mut g1, &store, false).unwrap();
        let a = encode_coords_1d(&mut g1, &pm1, &[0.3], &xs).unwrap();
        let mut g2 = Graph::new();
        let pm2 = bind_params(&mut g2, &doubled, false).unwrap();
        let b = encode_coords_1d(&mut g2, &pm2, &[0.3], &xs).unwrap();
        let a2 = g1.value(a).unwrap().scale(2.0).unwrap();
        assert_close(a2.data(), g2.value(b).unwrap().data(), 1e-15);
    }

    #[test]
    fn ic_rows_carry_field_position_and_parameters() {
        let u0 = Array::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let rows: Array<f64> = ic_inputs_1d(&u0, &[0.25, 0.75], &[0.001]).unwrap();
        assert_eq!(rows.shape(), &[2, 4]);
        assert_close(&rows.data()[..4], &[1.0, 2.0, 0.25, 0.001], 0.0);
        assert_close(&rows.data()[4..], &[3.0, 4.0, 0.75, 0.001], 0.0);
    }

    #[test]
    fn zero_projection_gives_zero_ic_tokens() {
        let cfg = ModelConfig { d: 8, heads: 2, ..ModelConfig::default() };
        let mut store: ParameterStore<f64> = init_params(&cfg).unwrap();
        store.set("ic.w", Array::zeros(&[cfg.ic_width_1d(), 8])).unwrap();
        store.set("ic.b", Array::zeros(&[8])).unwrap();
        let u0 = Array::from_vec(vec![3, 1], vec![0.3, -0.7, 0.1]).unwrap();
        let mut g = Graph::new();
        let pm = bind_params(&mut g, &store, false).unwrap();
        let z = encode_ic_1d(&mut g, &pm, &u0, &[0.0, 0.33, 0.66], &[0.2]).unwrap();
        assert!(g.value(z).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ic_encoding_commutes_with_joint_permutation() {
        let cfg = ModelConfig { d: 8, heads: 2, ..ModelConfig::default() };
        let store: ParameterStore<f64> = init_params(&cfg).unwrap();
        let u0 = Array::from_vec(vec![4, 1], vec![0.3, -0.7, 0.1, 0.9]).unwrap();
        let xs = [0.0, 0.25, 0.5, 0.75];
        let perm = [2usize, 0, 3, 1];
        let u0p = u0.gather_rows(&perm).unwrap();
        let xsp: Vec<f64> = perm.iter().map(|&i| xs[i]).collect();

        let mut g1 = Graph::new();
        let pm1 = bind_params(&mut g1, &store, false).unwrap();
        let z = encode_ic_1d(&mut g1, &pm1, &u0, &xs, &[0.2]).unwrap();
        let mut g2 = Graph::new();
        let pm2 = bind_params(&mut g2, &store, false).unwrap();
        let zp = encode_ic_1d(&mut g2, &pm2, &u0p, &xsp, &[0.2]).unwrap();
        let direct = g1.value(z).unwrap().gather_rows(&perm).unwrap();
        assert_eq!(&direct, g2.value(zp).unwrap());
    }

    #[test]
    fn fourier_features_at_the_origin_split_into_ones_and_zeros() {
        let cfg = ModelConfig { dim: 2, d: 16, heads: 2, lff_dim: 8, ..ModelConfig::default() };
        let store: ParameterStore<f64> = init_params(&cfg).unwrap();
        let mut g = Graph::new();
        let pm = bind_params(&mut g, &store, false).unwrap();
        let coords = g.constant(Array::from_vec(vec![1, 2], vec![0.0, 0.0]).unwrap());
        let feat = lff_features(&mut g, &pm, coords).unwrap();
        let v = g.value(feat).unwrap();
        assert_eq!(v.shape(), &[1, 8]);
        let scale = 1.0 / 8f64.sqrt();
        assert_close(&v.data()[..4], &[scale; 4], 1e-15);
        assert_close(&v.data()[4..], &[0.0; 4], 1e-15);

        let mut rng = Rng::new(7, 0);
        let pts: Vec<f64> = (0..20).map(|_| rng.uniform(0.0, 1.0)).collect();
        let coords = g.constant(Array::from_vec(vec![10, 2], pts).unwrap());
        let feat = lff_features(&mut g, &pm, coords).unwrap();
        assert!(g.value(feat).unwrap().data().iter().all(|v| v.abs() <= scale + 1e-15));
    }

    #[test]
    fn patch_scan_is_a_grid_permutation() {
        let idx = patch_indices(8, 4, 2).unwrap();
        let mut seen = vec![false; 32];
        for &i in &idx {
            assert!(!seen[i]);
            seen[i] = true;
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(&idx[..4], &[0, 1, 8, 9]);
        assert!(patch_indices(9, 4, 2).is_err());
    }

    fn grid_2d_cfg() -> ModelConfig {
        ModelConfig { dim: 2, d: 16, heads: 2, lff_dim: 4, ..ModelConfig::default() }
    }

    #[test]
    fn two_scale_tokenization_yields_both_patch_grids() {
        let cfg = grid_2d_cfg();
        let store: ParameterStore<f64> = init_params(&cfg).unwrap();
        let mut g = Graph::new();
        let pm = bind_params(&mut g, &store, false).unwrap();
        let coords = encode_coords_2d(&mut g, &pm, &cfg, &[0.5], 64, 64).unwrap();
        assert_eq!(g.value(coords).unwrap().shape(), &[272, 16]);

        let u0 = Array::full(&[64 * 64, 1], 0.3);
        let ic = encode_ic_2d(&mut g, &pm, &cfg, &u0, &[0.1], 64, 64).unwrap();
        assert_eq!(g.value(ic).unwrap().shape(), &[272, 16]);

        let single = ModelConfig { multiscale: false, ..cfg };
        let store1: ParameterStore<f64> = init_params(&single).unwrap();
        let mut g1 = Graph::new();
        let pm1 = bind_params(&mut g1, &store1, false).unwrap();
        let ic1 = encode_ic_2d(&mut g1, &pm1, &single, &u0, &[0.1], 64, 64).unwrap();
        assert_eq!(g1.value(ic1).unwrap().shape(), &[16, 16]);
    }

    #[test]
    fn constant_field_makes_identical_patch_tokens() {
        let cfg = grid_2d_cfg();
        let store: ParameterStore<f64> = init_params(&cfg).unwrap();
        let mut g = Graph::new();
        let pm = bind_params(&mut g, &store, false).unwrap();
        let u0 = Array::full(&[64 * 64, 1], -1.25);
        let ic = encode_ic_2d(&mut g, &pm, &cfg, &u0, &[0.7], 64, 64).unwrap();
        let v = g.value(ic).unwrap();
        let d = cfg.d;
        for row in 1..256 {
            assert_eq!(&v.data()[..d], &v.data()[row * d..(row + 1) * d], "small token {row}");
        }
        for row in 257..272 {
            assert_eq!(&v.data()[256 * d..257 * d], &v.data()[row * d..(row + 1) * d]);
        }
    }

    #[test]
    fn changing_time_changes_every_coordinate_token() {
        let cfg = grid_2d_cfg();
        let store: ParameterStore<f64> = init_params(&cfg).unwrap();
        let mut g = Graph::new();
        let pm = bind_params(&mut g, &store, false).unwrap();
        let out = encode_coords_2d(&mut g, &pm, &cfg, &[0.3, 0.6], 16, 16).unwrap();
        let v = g.value(out).unwrap();
        let n_tok = token_count_2d(&cfg, 16, 16).unwrap();
        let d = cfg.d;
        for row in 0..n_tok {
            let a = &v.data()[row * d..(row + 1) * d];
            let b = &v.data()[(n_tok + row) * d..(n_tok + row + 1) * d];
            assert!(a != b, "token {row} ignored the query time");
        }
    }

    #[test]
    fn single_scale_decode_inverts_an_identity_projection() {
        let cfg = ModelConfig {
            dim: 2,
            d: 8,
            heads: 2,
            lff_dim: 4,
            patch_small: 2,
            patch_large: 2,
            multiscale: false,
            ..ModelConfig::default()
        };
        let mut store: ParameterStore<f64> = init_params(&cfg).unwrap();
        let payload = 2 * 2 * cfg.c + cfg.j;
        let mut enc = Array::<f64>::zeros(&[payload, 8]);
        for i in 0..payload {
            enc.data_mut()[i * 8 + i] = 1.0;
        }
        let mut dec = Array::<f64>::zeros(&[8, 4]);
        for i in 0..4 {
            dec.data_mut()[i * 4 + i] = 1.0;
        }
        store.set("ic.proj_l.w", enc).unwrap();
        store.set("ic.proj_l.b", Array::zeros(&[8])).unwrap();
        store.set("dec.proj_l.w", dec).unwrap();
        store.set("dec.proj_l.b", Array::zeros(&[4])).unwrap();

        let mut rng = Rng::new(11, 0);
        let vals: Vec<f64> = (0..16).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let u0 = Array::from_vec(vec![16, 1], vals).unwrap();
        let mut g = Graph::new();
        let pm = bind_params(&mut g, &store, false).unwrap();
        let z = encode_ic_2d(&mut g, &pm, &cfg, &u0, &[0.5], 4, 4).unwrap();
        let out = decode_2d(&mut g, &pm, &cfg, z, 1, 4, 4).unwrap();
        assert_eq!(g.value(out).unwrap(), &u0);
    }

    #[test]
    fn mix_logits_blend_the_scales_through_a_softmax() {
        let cfg = ModelConfig {
            dim: 2,
            d: 8,
            heads: 2,
            lff_dim: 4,
            patch_small: 2,
            patch_large: 4,
            ..ModelConfig::default()
        };
        let store: ParameterStore<f64> = init_params(&cfg).unwrap();
        let n_tok = token_count_2d(&cfg, 4, 4).unwrap();
        let toks = params::draw_uniform::<f64>(&mut Rng::new(5, 0), &[n_tok, 8], 1.0);

        let decode_with = |logits: [f64; 2]| {
            let mut s = store.clone();
            s.set("dec.mix", Array::from_vec(vec![2], logits.to_vec()).unwrap()).unwrap();
            let mut g = Graph::new();
            let pm = bind_params(&mut g, &s, false).unwrap();
            let z = g.constant(toks.clone());
            let out = decode_2d(&mut g, &pm, &cfg, z, 1, 4, 4).unwrap();
            g.value(out).unwrap().clone()
        };

        let small_only = decode_with([40.0, -40.0]);
        let large_only = decode_with([-40.0, 40.0]);
        let balanced = decode_with([0.0, 0.0]);
        let mean = small_only.add(&large_only).unwrap().scale(0.5).unwrap();
        assert_close(balanced.data(), mean.data(), 1e-12);
        assert!(small_only.sub(&large_only).unwrap().max_abs() > 1e-3);
    }
}
