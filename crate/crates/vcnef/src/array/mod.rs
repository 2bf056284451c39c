//! Dense row-major arrays with a small, explicitly-shaped operation set.
//!
//! Everything the surrogate stack computes flows through [`Array`]: PDE
//! trajectories, latents, parameters, gradients. Two rules hold after every
//! operation and are enforced, not assumed:
//!
//! * shapes conform exactly — the only broadcast is scalar-by-array, and
//!   row-wise bias/gain application goes through the explicit [`Array::add_row`]
//!   / [`Array::mul_row`] operations;
//! * all values are finite — a NaN or Inf is surfaced as an error naming the
//!   operation that produced it, never silently propagated.
//!
//! [`graph::Graph`] records these operations onto a tape for reverse-mode
//! differentiation; [`finite_diff`] provides the central-difference oracle the
//! tape is audited against.

pub mod finite_diff;
pub mod graph;

use std::fmt::{Debug, Display};

use num_traits::Float;
use thiserror::Error;

// ── Element types ──────────────────────────────────────────────────────────

/// Payload width of an array element, as recorded in file metadata.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }

    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Floating-point element of an [`Array`]. Implemented for `f32` and `f64`;
/// tests and oracles run in `f64`, training may run in either.
pub trait Scalar: Float + Debug + Display + Default + Send + Sync + 'static {
    const DTYPE: Dtype;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    const DTYPE: Dtype = Dtype::F32;
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const DTYPE: Dtype = Dtype::F64;
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

// ── Errors ─────────────────────────────────────────────────────────────────

#[derive(Debug, Error)]
pub enum ArrayError {
    #[error("{op}: shape mismatch between {lhs} and {rhs}")]
    ShapeMismatch { op: &'static str, lhs: String, rhs: String },
    #[error("{op}: expected rank {expected}, got shape {got}")]
    RankMismatch { op: &'static str, expected: usize, got: String },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("{op}: invalid argument: {what}")]
    Invalid { op: &'static str, what: String },
    #[error("graph: {what}")]
    Graph { what: String },
}

pub type Result<T> = std::result::Result<T, ArrayError>;

pub(crate) fn fmt_shape(shape: &[usize]) -> String {
    let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
    format!("[{}]", dims.join(", "))
}

// ── Array ──────────────────────────────────────────────────────────────────

/// Immutable dense tensor, row-major, rank given by `shape.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Array<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Array<T> {
    pub fn from_vec(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() || shape.iter().any(|&d| d == 0) {
            return Err(ArrayError::Invalid {
                op: "from_vec",
                what: format!("shape {} does not hold {} values", fmt_shape(&shape), data.len()),
            });
        }
        Array { shape, data }.finite_checked("from_vec")
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Array { shape: shape.to_vec(), data: vec![T::zero(); n] }
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        let n: usize = shape.iter().product();
        Array { shape: shape.to_vec(), data: vec![v; n] }
    }

    /// Rank-1 singleton holding one value; the graph's scalar shape.
    pub fn scalar(v: T) -> Self {
        Array { shape: vec![1], data: vec![v] }
    }

    pub fn eye(n: usize) -> Self {
        let mut a = Array::zeros(&[n, n]);
        for i in 0..n {
            a.data[i * n + i] = T::one();
        }
        a
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// The single value of a one-element array.
    pub fn item(&self) -> Result<T> {
        if self.numel() != 1 {
            return Err(ArrayError::Invalid {
                op: "item",
                what: format!("shape {} is not scalar", fmt_shape(&self.shape)),
            });
        }
        Ok(self.data[0])
    }

    pub fn cast<U: Scalar>(&self) -> Array<U> {
        Array {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &v| m.max(v.to_f64().abs()))
    }

    fn rows_cols(&self, op: &'static str) -> Result<(usize, usize)> {
        if self.rank() != 2 {
            return Err(ArrayError::RankMismatch { op, expected: 2, got: fmt_shape(&self.shape) });
        }
        Ok((self.shape[0], self.shape[1]))
    }

    pub(crate) fn finite_checked(self, op: &'static str) -> Result<Self> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(self)
        } else {
            Err(ArrayError::NonFinite { op })
        }
    }

    // ── Elementwise (exact shape, or scalar-by-array) ──────────────────────

    fn zip(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        let out = if self.shape == other.shape {
            Array {
                shape: self.shape.clone(),
                data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            }
        } else if other.numel() == 1 {
            let s = other.data[0];
            Array { shape: self.shape.clone(), data: self.data.iter().map(|&a| f(a, s)).collect() }
        } else if self.numel() == 1 {
            let s = self.data[0];
            Array { shape: other.shape.clone(), data: other.data.iter().map(|&b| f(s, b)).collect() }
        } else {
            return Err(ArrayError::ShapeMismatch {
                op,
                lhs: fmt_shape(&self.shape),
                rhs: fmt_shape(&other.shape),
            });
        };
        out.finite_checked(op)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, "sub", |a, b| a - b)
    }

    /// Hadamard product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip(other, "mul", |a, b| a * b)
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        self.zip(other, "div", |a, b| a / b)
    }

    fn map(&self, op: &'static str, f: impl Fn(T) -> T) -> Result<Self> {
        Array { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
            .finite_checked(op)
    }

    pub fn neg(&self) -> Result<Self> {
        self.map("neg", |v| -v)
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        let c = T::from_f64(c);
        self.map("scale", |v| v * c)
    }

    pub fn add_scalar(&self, c: f64) -> Result<Self> {
        let c = T::from_f64(c);
        self.map("add_scalar", |v| v + c)
    }

    pub fn exp(&self) -> Result<Self> {
        self.map("exp", |v| v.exp())
    }

    pub fn sin(&self) -> Result<Self> {
        self.map("sin", |v| v.sin())
    }

    pub fn cos(&self) -> Result<Self> {
        self.map("cos", |v| v.cos())
    }

    pub fn elu(&self) -> Result<Self> {
        self.map("elu", elu)
    }

    pub fn gelu(&self) -> Result<Self> {
        self.map("gelu", gelu)
    }

    // ── Structure ──────────────────────────────────────────────────────────

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.numel() || shape.iter().any(|&d| d == 0) {
            return Err(ArrayError::ShapeMismatch {
                op: "reshape",
                lhs: fmt_shape(&self.shape),
                rhs: fmt_shape(shape),
            });
        }
        Ok(Array { shape: shape.to_vec(), data: self.data.clone() })
    }

    pub fn transpose2(&self) -> Result<Self> {
        let (r, c) = self.rows_cols("transpose2")?;
        let mut data = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(Array { shape: vec![c, r], data })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (m, ka) = self.rows_cols("matmul")?;
        let (kb, n) = other.rows_cols("matmul")?;
        if ka != kb {
            return Err(ArrayError::ShapeMismatch {
                op: "matmul",
                lhs: fmt_shape(&self.shape),
                rhs: fmt_shape(&other.shape),
            });
        }
        let mut out = vec![T::zero(); m * n];
        matmul_kernel(&self.data, &other.data, m, ka, n, &mut out);
        Array { shape: vec![m, n], data: out }.finite_checked("matmul")
    }

    pub fn concat_rows(parts: &[&Self]) -> Result<Self> {
        if parts.is_empty() {
            return Err(ArrayError::Invalid { op: "concat_rows", what: "no inputs".into() });
        }
        let (_, c0) = parts[0].rows_cols("concat_rows")?;
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            let (r, c) = p.rows_cols("concat_rows")?;
            if c != c0 {
                return Err(ArrayError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: fmt_shape(&parts[0].shape),
                    rhs: fmt_shape(&p.shape),
                });
            }
            rows += r;
            data.extend_from_slice(&p.data);
        }
        Ok(Array { shape: vec![rows, c0], data })
    }

    pub fn concat_cols(parts: &[&Self]) -> Result<Self> {
        if parts.is_empty() {
            return Err(ArrayError::Invalid { op: "concat_cols", what: "no inputs".into() });
        }
        let (r0, _) = parts[0].rows_cols("concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        let mut total = 0;
        for p in parts {
            let (r, c) = p.rows_cols("concat_cols")?;
            if r != r0 {
                return Err(ArrayError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: fmt_shape(&parts[0].shape),
                    rhs: fmt_shape(&p.shape),
                });
            }
            widths.push(c);
            total += c;
        }
        let mut data = vec![T::zero(); r0 * total];
        for i in 0..r0 {
            let mut off = 0;
            for (p, &w) in parts.iter().zip(&widths) {
                data[i * total + off..i * total + off + w]
                    .copy_from_slice(&p.data[i * w..(i + 1) * w]);
                off += w;
            }
        }
        Ok(Array { shape: vec![r0, total], data })
    }

    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Self> {
        let (r, c) = self.rows_cols("slice_rows")?;
        if start + len > r || len == 0 {
            return Err(ArrayError::Invalid {
                op: "slice_rows",
                what: format!("window {start}..{} exceeds {r} rows", start + len),
            });
        }
        Ok(Array { shape: vec![len, c], data: self.data[start * c..(start + len) * c].to_vec() })
    }

    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Self> {
        let (r, c) = self.rows_cols("slice_cols")?;
        if start + len > c || len == 0 {
            return Err(ArrayError::Invalid {
                op: "slice_cols",
                what: format!("window {start}..{} exceeds {c} cols", start + len),
            });
        }
        let mut data = vec![T::zero(); r * len];
        for i in 0..r {
            data[i * len..(i + 1) * len]
                .copy_from_slice(&self.data[i * c + start..i * c + start + len]);
        }
        Ok(Array { shape: vec![r, len], data })
    }

    /// Row gather; indices may repeat (used to replicate encoder tokens
    /// across query times), so the adjoint is a scatter-add.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Self> {
        let (r, c) = self.rows_cols("gather_rows")?;
        if indices.is_empty() {
            return Err(ArrayError::Invalid { op: "gather_rows", what: "no indices".into() });
        }
        let mut data = vec![T::zero(); indices.len() * c];
        for (i, &src) in indices.iter().enumerate() {
            if src >= r {
                return Err(ArrayError::Invalid {
                    op: "gather_rows",
                    what: format!("index {src} out of {r} rows"),
                });
            }
            data[i * c..(i + 1) * c].copy_from_slice(&self.data[src * c..(src + 1) * c]);
        }
        Ok(Array { shape: vec![indices.len(), c], data })
    }

    /// Adds a rank-1 `[c]` vector to every row of a `[r, c]` matrix.
    pub fn add_row(&self, row: &Self) -> Result<Self> {
        self.row_op(row, "add_row", |a, b| a + b)
    }

    /// Multiplies every row of a `[r, c]` matrix by a rank-1 `[c]` vector.
    pub fn mul_row(&self, row: &Self) -> Result<Self> {
        self.row_op(row, "mul_row", |a, b| a * b)
    }

    fn row_op(&self, row: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        let (r, c) = self.rows_cols(op)?;
        if row.shape != [c] {
            return Err(ArrayError::ShapeMismatch {
                op,
                lhs: fmt_shape(&self.shape),
                rhs: fmt_shape(&row.shape),
            });
        }
        let mut data = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                data[i * c + j] = f(self.data[i * c + j], row.data[j]);
            }
        }
        Array { shape: vec![r, c], data }.finite_checked(op)
    }

    // ── Reductions and normalization ───────────────────────────────────────

    pub fn sum_all(&self) -> Result<Self> {
        let mut acc = T::zero();
        for &v in &self.data {
            acc = acc + v;
        }
        Array::scalar(acc).finite_checked("sum_all")
    }

    pub fn mean_all(&self) -> Result<Self> {
        let n = T::from_f64(self.numel() as f64);
        let s = self.sum_all()?;
        Array::scalar(s.data[0] / n).finite_checked("mean_all")
    }

    /// Normalizes each slice along the last axis to zero mean and unit
    /// variance: (x − μ)/√(σ² + eps). Purely normalizing; learnable gain and
    /// shift are separate `mul_row`/`add_row` applications.
    pub fn layer_norm(&self, eps: f64) -> Result<Self> {
        let last = *self.shape.last().ok_or(ArrayError::RankMismatch {
            op: "layer_norm",
            expected: 1,
            got: fmt_shape(&self.shape),
        })?;
        let eps = T::from_f64(eps);
        let inv_n = T::one() / T::from_f64(last as f64);
        let mut data = vec![T::zero(); self.numel()];
        for (out, row) in data.chunks_mut(last).zip(self.data.chunks(last)) {
            let mut mean = T::zero();
            for &v in row {
                mean = mean + v;
            }
            mean = mean * inv_n;
            let mut var = T::zero();
            for &v in row {
                let d = v - mean;
                var = var + d * d;
            }
            var = var * inv_n;
            let inv_std = T::one() / (var + eps).sqrt();
            for (o, &v) in out.iter_mut().zip(row) {
                *o = (v - mean) * inv_std;
            }
        }
        Array { shape: self.shape.clone(), data }.finite_checked("layer_norm")
    }
}

// ── Pointwise nonlinearities ───────────────────────────────────────────────

pub fn elu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x.exp() - T::one()
    }
}

pub fn elu_prime<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        x.exp()
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh-form GELU.
pub fn gelu<T: Scalar>(x: T) -> T {
    let c = T::from_f64(GELU_C);
    let a = T::from_f64(GELU_A);
    let half = T::from_f64(0.5);
    let u = c * (x + a * x * x * x);
    half * x * (T::one() + u.tanh())
}

pub fn gelu_prime<T: Scalar>(x: T) -> T {
    let c = T::from_f64(GELU_C);
    let a = T::from_f64(GELU_A);
    let half = T::from_f64(0.5);
    let three = T::from_f64(3.0);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let sech2 = T::one() - t * t;
    half * (T::one() + t) + half * x * sech2 * c * (T::one() + three * a * x * x)
}

// ── Matmul kernel ──────────────────────────────────────────────────────────

const MATMUL_PAR_WORK: usize = 1 << 20;

/// Row-major `[m,k] × [k,n]` product. Each output row is a fixed-order
/// accumulation over k, so results are bit-identical whether or not the row
/// loop runs on the Rayon pool.
pub(crate) fn matmul_kernel<T: Scalar>(
    a: &[T],
    b: &[T],
    m: usize,
    k: usize,
    n: usize,
    out: &mut [T],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let row = |arow: &[T], orow: &mut [T]| {
        for (kk, &aik) in arow.iter().enumerate() {
            let brow = &b[kk * n..kk * n + n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + aik * bv;
            }
        }
    };
    if m * k * n >= MATMUL_PAR_WORK && rayon::current_num_threads() > 1 {
        use rayon::prelude::*;
        out.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, orow)| row(&a[i * k..(i + 1) * k], orow));
    } else {
        for (i, orow) in out.chunks_mut(n).enumerate() {
            row(&a[i * k..(i + 1) * k], orow);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arr(shape: &[usize], v: &[f64]) -> Array<f64> {
        Array::from_vec(shape.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn hadamard_definition() {
        let a = arr(&[2], &[1.0, 2.0]);
        let b = arr(&[2], &[3.0, 4.0]);
        assert_eq!(a.mul(&b).unwrap().data(), &[3.0, 8.0]);
    }

    #[test]
    fn matmul_identity() {
        let a = arr(&[3, 3], &[5.0, -1.0, 2.0, 0.5, 3.0, 7.0, -4.0, 1.5, 9.0]);
        let out = Array::eye(3).matmul(&a).unwrap();
        assert_eq!(out.data(), a.data());
    }

    #[test]
    fn layer_norm_matches_hand_formula() {
        let x = arr(&[3], &[1.0, 2.0, 3.0]);
        let y = x.layer_norm(1e-5).unwrap();
        // Independent scalar route: mean 2, population variance 2/3.
        let mean = (1.0 + 2.0 + 3.0) / 3.0;
        let var = ((1.0f64 - mean).powi(2) + (2.0 - mean).powi(2) + (3.0 - mean).powi(2)) / 3.0;
        let inv = 1.0 / (var + 1e-5).sqrt();
        for (got, x) in y.data().iter().zip([1.0, 2.0, 3.0]) {
            assert!((got - (x - mean) * inv).abs() < 1e-14);
        }
        let s: f64 = y.data().iter().sum();
        assert!(s.abs() < 1e-12, "normalized mean must vanish");
    }

    #[test]
    fn matmul_associativity() {
        // Prerequisite for the linear-attention equivalence check.
        let mut rng = crate::rng::Rng::new(7, 0);
        let rand = |rng: &mut crate::rng::Rng| {
            let data: Vec<f64> = (0..64).map(|_| rng.uniform(-1.0, 1.0)).collect();
            Array::from_vec(vec![8, 8], data).unwrap()
        };
        let a = rand(&mut rng);
        let b = rand(&mut rng);
        let c = rand(&mut rng);
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        for (l, r) in left.data().iter().zip(right.data()) {
            assert!((l - r).abs() < 1e-10);
        }
    }

    #[test]
    fn shape_mismatch_names_operation_and_shapes() {
        let a = arr(&[2], &[1.0, 2.0]);
        let b = arr(&[3], &[1.0, 2.0, 3.0]);
        let err = a.add(&b).unwrap_err().to_string();
        assert!(err.contains("add") && err.contains("[2]") && err.contains("[3]"), "{err}");
    }

    #[test]
    fn scalar_by_array_is_the_only_broadcast() {
        let a = arr(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let s = Array::scalar(2.0);
        assert_eq!(a.mul(&s).unwrap().data(), &[2.0, 4.0, 6.0, 8.0]);
        let row = arr(&[1, 2], &[1.0, 1.0]);
        assert!(a.add(&row).is_err(), "row-by-matrix must not broadcast implicitly");
    }

    #[test]
    fn non_finite_is_surfaced() {
        let a = arr(&[1], &[800.0]);
        let err = a.exp().unwrap_err();
        assert!(matches!(err, ArrayError::NonFinite { op: "exp" }));
    }

    #[test]
    fn concat_slice_round_trip() {
        let a = arr(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = arr(&[2, 1], &[9.0, 8.0]);
        let cat = Array::concat_cols(&[&a, &b]).unwrap();
        assert_eq!(cat.shape(), &[2, 3]);
        assert_eq!(cat.slice_cols(0, 2).unwrap(), a);
        assert_eq!(cat.slice_cols(2, 1).unwrap(), b);
        let cat2 = Array::concat_rows(&[&a, &a]).unwrap();
        assert_eq!(cat2.slice_rows(2, 2).unwrap(), a);
    }

    #[test]
    fn gather_rows_replicates() {
        let a = arr(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let g = a.gather_rows(&[1, 1, 0]).unwrap();
        assert_eq!(g.data(), &[3.0, 4.0, 3.0, 4.0, 1.0, 2.0]);
    }

    #[test]
    fn transpose_reshape() {
        let a = arr(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let t = a.transpose2().unwrap();
        assert_eq!(t.shape(), &[3, 2]);
        assert_eq!(t.data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(a.reshape(&[3, 2]).unwrap().data(), a.data());
        assert!(a.reshape(&[4, 2]).is_err());
    }
}
