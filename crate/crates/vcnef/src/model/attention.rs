//! Linear attention and its quadratic reference.
//!
//! The production path computes Φ(Q)(Φ(K)ᵀV) right-associated, which costs
//! O(n·d²) and never materializes an n×n matrix. The reference here expands
//! the full weight matrix left-associated, costing O(n²·d); both compute
//! the same function, so they cross-check each other to roundoff.

use crate::array::graph::linear_attention_fwd;
use crate::array::{Array, ArrayError, Result, Scalar};

/// Attention feature map: ELU(x) + 1. Strictly positive, which makes every
/// attention weight nonnegative and the normalization a true average.
pub fn feature_map<T: Scalar>(x: &Array<T>) -> Result<Array<T>> {
    x.elu()?.add_scalar(1.0)
}

fn check_heads<T: Scalar>(q: &Array<T>, k: &Array<T>, v: &Array<T>, heads: usize) -> Result<(usize, usize)> {
    let qs = q.shape();
    if qs.len() != 2 || k.shape() != qs || v.shape() != qs {
        return Err(ArrayError::Invalid {
            op: "attention",
            what: format!("q/k/v shapes {:?}/{:?}/{:?} must match as [n, d]", qs, k.shape(), v.shape()),
        });
    }
    if heads == 0 || qs[1] % heads != 0 {
        return Err(ArrayError::Invalid {
            op: "attention",
            what: format!("{heads} heads do not divide width {}", qs[1]),
        });
    }
    Ok((qs[0], qs[1]))
}

/// Right-associated multi-head linear attention over a single segment.
pub fn linear_attention<T: Scalar>(
    q: &Array<T>,
    k: &Array<T>,
    v: &Array<T>,
    heads: usize,
    eps: f64,
) -> Result<Array<T>> {
    let (n, d) = check_heads(q, k, v, heads)?;
    let mut out = vec![T::zero(); n * d];
    linear_attention_fwd(q.data(), k.data(), v.data(), d, n, heads, eps, &mut out);
    Array::from_vec(vec![n, d], out)
}

/// Unnormalized single-head attention weights Φ(Q)Φ(K)ᵀ.
pub fn attention_weights<T: Scalar>(q: &Array<T>, k: &Array<T>) -> Result<Array<T>> {
    feature_map(q)?.matmul(&feature_map(k)?.transpose2()?)
}

/// Left-associated reference: materializes each head's full weight matrix
/// and normalizes row by row. Identical in exact arithmetic to
/// [`linear_attention`], quadratic in the token count.
pub fn quadratic_attention<T: Scalar>(
    q: &Array<T>,
    k: &Array<T>,
    v: &Array<T>,
    heads: usize,
    eps: f64,
) -> Result<Array<T>> {
    let (n, d) = check_heads(q, k, v, heads)?;
    let dh = d / heads;
    let eps = T::from_f64(eps);
    let mut out = vec![T::zero(); n * d];
    for h in 0..heads {
        let cols = h * dh;
        let qh = q.slice_cols(cols, dh)?;
        let kh = k.slice_cols(cols, dh)?;
        let weights = attention_weights(&qh, &kh)?;
        for i in 0..n {
            let wrow = &weights.data()[i * n..(i + 1) * n];
            let mut denom = T::zero();
            for &w in wrow {
                denom = denom + w;
            }
            denom = denom + eps;
            for c in 0..dh {
                let mut num = T::zero();
                for (j, &w) in wrow.iter().enumerate() {
                    num = num + w * v.data()[j * d + cols + c];
                }
                out[i * d + cols + c] = num / denom;
            }
        }
    }
    Array::from_vec(vec![n, d], out)
}
