//! Reverse-mode autodiff on a Wengert tape.
//!
//! Operations are recorded in execution order and evaluated eagerly; a node
//! holds its op, its input ids, and its computed value. Backward walks the
//! tape in reverse, pushing vector-Jacobian products toward the named leaf
//! parameters. Three contract points shape the design:
//!
//! * replaying the tape with unchanged leaves reproduces every recorded value
//!   bit-exactly (fixed op order, fixed reduction order — also the reason the
//!   intra-op parallelism in the kernels is deterministic);
//! * after `backward`, every trainable leaf owns exactly one gradient buffer,
//!   zero-filled if the output does not depend on it;
//! * memory-tight training uses `backward_consuming`, which drops derived
//!   values as the reverse sweep passes them; `replay` restores the tape.
//!
//! The only fused primitive is segmented multi-head linear attention: one
//! node covers what would otherwise be thousands of per-segment slices, and
//! its adjoint is audited against the finite-difference oracle like every
//! other op.

use std::sync::Arc;

use indexmap::IndexMap;

use super::{elu, elu_prime, fmt_shape, gelu_prime, Array, ArrayError, Result, Scalar};

pub type NodeId = usize;

/// Gradient buffers keyed by leaf name, in leaf registration order.
pub type Gradients<T> = IndexMap<String, Array<T>>;

#[derive(Debug, Clone)]
enum Op {
    Leaf(String),
    Constant,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Neg(NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId, f64),
    Matmul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    MulRow(NodeId, NodeId),
    LayerNorm(NodeId, f64),
    Elu(NodeId),
    Gelu(NodeId),
    Exp(NodeId),
    Sin(NodeId),
    Cos(NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
    Reshape(NodeId, Vec<usize>),
    Transpose2(NodeId),
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    SliceRows(NodeId, usize, usize),
    SliceCols(NodeId, usize, usize),
    GatherRows(NodeId, Arc<Vec<usize>>),
    LinearAttention { q: NodeId, k: NodeId, v: NodeId, seg_len: usize, heads: usize, eps: f64 },
}

struct Node<T> {
    op: Op,
    value: Option<Array<T>>,
}

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    leaves: IndexMap<String, NodeId>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), leaves: IndexMap::new() }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Registers a trainable parameter. Names must be unique per graph.
    pub fn leaf(&mut self, name: &str, value: Array<T>) -> Result<NodeId> {
        if self.leaves.contains_key(name) {
            return Err(ArrayError::Graph { what: format!("duplicate leaf '{name}'") });
        }
        let id = self.push(Op::Leaf(name.to_string()), value);
        self.leaves.insert(name.to_string(), id);
        Ok(id)
    }

    /// Registers an input the backward pass does not differentiate.
    pub fn constant(&mut self, value: Array<T>) -> NodeId {
        self.push(Op::Constant, value)
    }

    pub fn value(&self, id: NodeId) -> Result<&Array<T>> {
        self.nodes[id]
            .value
            .as_ref()
            .ok_or_else(|| ArrayError::Graph { what: format!("node {id} consumed; call replay()") })
    }

    pub fn leaf_id(&self, name: &str) -> Option<NodeId> {
        self.leaves.get(name).copied()
    }

    /// Replaces a leaf's value (same shape) without touching the tape; the
    /// next `replay` propagates it.
    pub fn set_leaf(&mut self, name: &str, value: Array<T>) -> Result<()> {
        let id = *self
            .leaves
            .get(name)
            .ok_or_else(|| ArrayError::Graph { what: format!("unknown leaf '{name}'") })?;
        let current = self.nodes[id].value.as_ref().expect("leaf values are never dropped");
        if current.shape() != value.shape() {
            return Err(ArrayError::ShapeMismatch {
                op: "set_leaf",
                lhs: fmt_shape(current.shape()),
                rhs: fmt_shape(value.shape()),
            });
        }
        self.nodes[id].value = Some(value);
        Ok(())
    }

    fn push(&mut self, op: Op, value: Array<T>) -> NodeId {
        self.nodes.push(Node { op, value: Some(value) });
        self.nodes.len() - 1
    }

    fn record(&mut self, op: Op) -> Result<NodeId> {
        let value = self.eval_op(&op)?;
        Ok(self.push(op, value))
    }

    fn val(&self, id: NodeId) -> &Array<T> {
        self.nodes[id].value.as_ref().expect("value consumed; replay() before reuse")
    }

    // ── Recorded operations ────────────────────────────────────────────────

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Div(a, b))
    }

    pub fn neg(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Neg(a))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.record(Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.record(Op::AddScalar(a, c))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.record(Op::Matmul(a, b))
    }

    pub fn add_row(&mut self, m: NodeId, r: NodeId) -> Result<NodeId> {
        self.record(Op::AddRow(m, r))
    }

    pub fn mul_row(&mut self, m: NodeId, r: NodeId) -> Result<NodeId> {
        self.record(Op::MulRow(m, r))
    }

    pub fn layer_norm(&mut self, a: NodeId, eps: f64) -> Result<NodeId> {
        self.record(Op::LayerNorm(a, eps))
    }

    pub fn elu(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Elu(a))
    }

    pub fn gelu(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Gelu(a))
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Exp(a))
    }

    pub fn sin(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Sin(a))
    }

    pub fn cos(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Cos(a))
    }

    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::MeanAll(a))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.record(Op::Reshape(a, shape.to_vec()))
    }

    pub fn transpose2(&mut self, a: NodeId) -> Result<NodeId> {
        self.record(Op::Transpose2(a))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.record(Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.record(Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.record(Op::SliceRows(a, start, len))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.record(Op::SliceCols(a, start, len))
    }

    pub fn gather_rows(&mut self, a: NodeId, indices: Arc<Vec<usize>>) -> Result<NodeId> {
        self.record(Op::GatherRows(a, indices))
    }

    /// Softmax-free attention over `rows/seg_len` independent segments, each
    /// head computed right-associated in O(seg_len·d_h²).
    pub fn linear_attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        seg_len: usize,
        heads: usize,
        eps: f64,
    ) -> Result<NodeId> {
        self.record(Op::LinearAttention { q, k, v, seg_len, heads, eps })
    }

    // ── Evaluation (record-time and replay share this path) ────────────────

    fn eval_op(&self, op: &Op) -> Result<Array<T>> {
        match op {
            Op::Leaf(_) | Op::Constant => unreachable!("source nodes are never re-evaluated"),
            Op::Add(a, b) => self.val(*a).add(self.val(*b)),
            Op::Sub(a, b) => self.val(*a).sub(self.val(*b)),
            Op::Mul(a, b) => self.val(*a).mul(self.val(*b)),
            Op::Div(a, b) => self.val(*a).div(self.val(*b)),
            Op::Neg(a) => self.val(*a).neg(),
            Op::Scale(a, c) => self.val(*a).scale(*c),
            Op::AddScalar(a, c) => self.val(*a).add_scalar(*c),
            Op::Matmul(a, b) => self.val(*a).matmul(self.val(*b)),
            Op::AddRow(m, r) => self.val(*m).add_row(self.val(*r)),
            Op::MulRow(m, r) => self.val(*m).mul_row(self.val(*r)),
            Op::LayerNorm(a, eps) => self.val(*a).layer_norm(*eps),
            Op::Elu(a) => self.val(*a).elu(),
            Op::Gelu(a) => self.val(*a).gelu(),
            Op::Exp(a) => self.val(*a).exp(),
            Op::Sin(a) => self.val(*a).sin(),
            Op::Cos(a) => self.val(*a).cos(),
            Op::SumAll(a) => self.val(*a).sum_all(),
            Op::MeanAll(a) => self.val(*a).mean_all(),
            Op::Reshape(a, shape) => self.val(*a).reshape(shape),
            Op::Transpose2(a) => self.val(*a).transpose2(),
            Op::ConcatRows(parts) => {
                let vals: Vec<&Array<T>> = parts.iter().map(|&p| self.val(p)).collect();
                Array::concat_rows(&vals)
            }
            Op::ConcatCols(parts) => {
                let vals: Vec<&Array<T>> = parts.iter().map(|&p| self.val(p)).collect();
                Array::concat_cols(&vals)
            }
            Op::SliceRows(a, start, len) => self.val(*a).slice_rows(*start, *len),
            Op::SliceCols(a, start, len) => self.val(*a).slice_cols(*start, *len),
            Op::GatherRows(a, idx) => self.val(*a).gather_rows(idx.as_slice()),
            Op::LinearAttention { q, k, v, seg_len, heads, eps } => {
                let (qv, kv, vv) = (self.val(*q), self.val(*k), self.val(*v));
                check_attention_shapes(qv, kv, vv, *seg_len, *heads)?;
                let rows = qv.shape()[0];
                let d = qv.shape()[1];
                let mut out = vec![T::zero(); rows * d];
                linear_attention_fwd(
                    qv.data(),
                    kv.data(),
                    vv.data(),
                    d,
                    *seg_len,
                    *heads,
                    *eps,
                    &mut out,
                );
                Array::from_vec(vec![rows, d], out)
                    .and_then(|a| a.finite_checked("linear_attention"))
            }
        }
    }

    /// Recomputes every derived node in tape order from the current leaf and
    /// constant values. Bit-exact for unchanged leaves.
    pub fn replay(&mut self) -> Result<()> {
        for i in 0..self.nodes.len() {
            match self.nodes[i].op {
                Op::Leaf(_) | Op::Constant => {}
                _ => {
                    let op = self.nodes[i].op.clone();
                    let value = self.eval_op(&op)?;
                    self.nodes[i].value = Some(value);
                }
            }
        }
        Ok(())
    }

    // ── Backward ───────────────────────────────────────────────────────────

    /// Reverse sweep from the scalar node `out`; the tape stays intact and
    /// reusable.
    pub fn backward(&mut self, out: NodeId) -> Result<Gradients<T>> {
        self.backward_impl(out, false)
    }

    /// Reverse sweep that drops derived values as it passes them, bounding
    /// peak memory during training. `replay` restores the tape.
    pub fn backward_consuming(&mut self, out: NodeId) -> Result<Gradients<T>> {
        self.backward_impl(out, true)
    }

    fn backward_impl(&mut self, out: NodeId, consume: bool) -> Result<Gradients<T>> {
        if self.value(out)?.numel() != 1 {
            return Err(ArrayError::Graph {
                what: format!(
                    "backward needs a scalar output, got shape {}",
                    fmt_shape(self.value(out)?.shape())
                ),
            });
        }
        let mut grads: Vec<Option<Array<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out] = Some(Array::scalar(T::one()));
        let mut leaf_grads: IndexMap<String, Array<T>> = IndexMap::new();

        for i in (0..=out).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !g.data().iter().all(|v| v.is_finite()) {
                return Err(ArrayError::NonFinite { op: "backward" });
            }
            let op = self.nodes[i].op.clone();
            match &op {
                Op::Leaf(name) => {
                    leaf_grads.insert(name.clone(), g);
                    continue;
                }
                Op::Constant => continue,
                Op::Add(a, b) => {
                    let (sa, sb) = (self.val(*a).shape().to_vec(), self.val(*b).shape().to_vec());
                    accum(&mut grads[*a], reduce_to(&sa, g.clone())?);
                    accum(&mut grads[*b], reduce_to(&sb, g)?);
                }
                Op::Sub(a, b) => {
                    let (sa, sb) = (self.val(*a).shape().to_vec(), self.val(*b).shape().to_vec());
                    accum(&mut grads[*a], reduce_to(&sa, g.clone())?);
                    accum(&mut grads[*b], reduce_to(&sb, g.neg()?)?);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.val(*a), self.val(*b));
                    let da = reduce_to(av.shape(), g.mul(bv)?)?;
                    let db = reduce_to(bv.shape(), g.mul(av)?)?;
                    accum(&mut grads[*a], da);
                    accum(&mut grads[*b], db);
                }
                Op::Div(a, b) => {
                    let (av, bv) = (self.val(*a), self.val(*b));
                    let da = reduce_to(av.shape(), g.div(bv)?)?;
                    let db = reduce_to(bv.shape(), g.mul(av)?.div(bv)?.div(bv)?.neg()?)?;
                    accum(&mut grads[*a], da);
                    accum(&mut grads[*b], db);
                }
                Op::Neg(a) => accum(&mut grads[*a], g.neg()?),
                Op::Scale(a, c) => accum(&mut grads[*a], g.scale(*c)?),
                Op::AddScalar(a, _) => accum(&mut grads[*a], g),
                Op::Matmul(a, b) => {
                    let (av, bv) = (self.val(*a), self.val(*b));
                    let da = g.matmul(&bv.transpose2()?)?;
                    let db = av.transpose2()?.matmul(&g)?;
                    accum(&mut grads[*a], da);
                    accum(&mut grads[*b], db);
                }
                Op::AddRow(m, r) => {
                    let dr = col_sum(&g)?;
                    accum(&mut grads[*m], g);
                    accum(&mut grads[*r], dr);
                }
                Op::MulRow(m, r) => {
                    let (mv, rv) = (self.val(*m), self.val(*r));
                    let dm = g.mul_row(rv)?;
                    let dr = col_sum(&g.mul(mv)?)?;
                    accum(&mut grads[*m], dm);
                    accum(&mut grads[*r], dr);
                }
                Op::LayerNorm(a, eps) => {
                    let dx = layer_norm_bwd(self.val(*a), &g, *eps)?;
                    accum(&mut grads[*a], dx);
                }
                Op::Elu(a) => {
                    let dx = pointwise_bwd(self.val(*a), &g, elu_prime);
                    accum(&mut grads[*a], dx);
                }
                Op::Gelu(a) => {
                    let dx = pointwise_bwd(self.val(*a), &g, gelu_prime);
                    accum(&mut grads[*a], dx);
                }
                Op::Exp(a) => {
                    let dx = pointwise_bwd(self.val(*a), &g, |x| x.exp());
                    accum(&mut grads[*a], dx);
                }
                Op::Sin(a) => {
                    let dx = pointwise_bwd(self.val(*a), &g, |x| x.cos());
                    accum(&mut grads[*a], dx);
                }
                Op::Cos(a) => {
                    let dx = pointwise_bwd(self.val(*a), &g, |x| -x.sin());
                    accum(&mut grads[*a], dx);
                }
                Op::SumAll(a) => {
                    let g0 = g.item()?;
                    accum(&mut grads[*a], Array::full(self.val(*a).shape(), g0));
                }
                Op::MeanAll(a) => {
                    let av = self.val(*a);
                    let g0 = g.item()? / T::from_f64(av.numel() as f64);
                    accum(&mut grads[*a], Array::full(av.shape(), g0));
                }
                Op::Reshape(a, _) => {
                    let shape = self.val(*a).shape().to_vec();
                    accum(&mut grads[*a], g.reshape(&shape)?);
                }
                Op::Transpose2(a) => accum(&mut grads[*a], g.transpose2()?),
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let rows = self.val(p).shape()[0];
                        accum(&mut grads[p], g.slice_rows(start, rows)?);
                        start += rows;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let cols = self.val(p).shape()[1];
                        accum(&mut grads[p], g.slice_cols(start, cols)?);
                        start += cols;
                    }
                }
                Op::SliceRows(a, start, len) => {
                    let shape = self.val(*a).shape().to_vec();
                    let cols = shape[1];
                    let mut dx = Array::zeros(&shape);
                    dx.data_mut()[start * cols..(start + len) * cols].copy_from_slice(g.data());
                    accum(&mut grads[*a], dx);
                }
                Op::SliceCols(a, start, len) => {
                    let shape = self.val(*a).shape().to_vec();
                    let cols = shape[1];
                    let mut dx = Array::zeros(&shape);
                    for i in 0..shape[0] {
                        dx.data_mut()[i * cols + start..i * cols + start + len]
                            .copy_from_slice(&g.data()[i * len..(i + 1) * len]);
                    }
                    accum(&mut grads[*a], dx);
                }
                Op::GatherRows(a, idx) => {
                    let shape = self.val(*a).shape().to_vec();
                    let cols = shape[1];
                    let mut dx = Array::zeros(&shape);
                    for (i, &src) in idx.iter().enumerate() {
                        let dst = &mut dx.data_mut()[src * cols..(src + 1) * cols];
                        for (o, &gv) in dst.iter_mut().zip(&g.data()[i * cols..(i + 1) * cols]) {
                            *o = *o + gv;
                        }
                    }
                    accum(&mut grads[*a], dx);
                }
                Op::LinearAttention { q, k, v, seg_len, heads, eps } => {
                    let (qv, kv, vv) = (self.val(*q), self.val(*k), self.val(*v));
                    let d = qv.shape()[1];
                    let (dq, dk, dv) = linear_attention_bwd(
                        qv.data(),
                        kv.data(),
                        vv.data(),
                        g.data(),
                        d,
                        *seg_len,
                        *heads,
                        *eps,
                    );
                    let shape = qv.shape().to_vec();
                    accum(&mut grads[*q], Array::from_vec(shape.clone(), dq)?);
                    accum(&mut grads[*k], Array::from_vec(shape.clone(), dk)?);
                    accum(&mut grads[*v], Array::from_vec(shape, dv)?);
                }
            }
            if consume {
                self.nodes[i].value = None;
            }
        }

        // Leaves the output does not reach still get exactly one buffer.
        let mut result = IndexMap::with_capacity(self.leaves.len());
        for (name, &id) in &self.leaves {
            let g = leaf_grads
                .swap_remove(name)
                .unwrap_or_else(|| Array::zeros(self.val(id).shape()));
            result.insert(name.clone(), g);
        }
        Ok(result)
    }
}

// ── Backward helpers ───────────────────────────────────────────────────────

fn accum<T: Scalar>(slot: &mut Option<Array<T>>, delta: Array<T>) {
    match slot {
        None => *slot = Some(delta),
        Some(acc) => {
            debug_assert_eq!(acc.shape(), delta.shape());
            for (a, &d) in acc.data_mut().iter_mut().zip(delta.data()) {
                *a = *a + d;
            }
        }
    }
}

/// Collapses a gradient onto a broadcast operand: identity when shapes agree,
/// full sum when the operand was a scalar.
fn reduce_to<T: Scalar>(shape: &[usize], g: Array<T>) -> Result<Array<T>> {
    if g.shape() == shape {
        Ok(g)
    } else {
        debug_assert_eq!(shape.iter().product::<usize>(), 1);
        let mut acc = T::zero();
        for &v in g.data() {
            acc = acc + v;
        }
        Array::scalar(acc).reshape(shape)
    }
}

fn col_sum<T: Scalar>(g: &Array<T>) -> Result<Array<T>> {
    let rows = g.shape()[0];
    let cols = g.shape()[1];
    let mut out = vec![T::zero(); cols];
    for i in 0..rows {
        for (o, &v) in out.iter_mut().zip(&g.data()[i * cols..(i + 1) * cols]) {
            *o = *o + v;
        }
    }
    Array::from_vec(vec![cols], out)
}

fn pointwise_bwd<T: Scalar>(x: &Array<T>, g: &Array<T>, dfdx: impl Fn(T) -> T) -> Array<T> {
    let data = x.data().iter().zip(g.data()).map(|(&xv, &gv)| gv * dfdx(xv)).collect();
    Array { shape: x.shape().to_vec(), data }
}

fn layer_norm_bwd<T: Scalar>(x: &Array<T>, g: &Array<T>, eps: f64) -> Result<Array<T>> {
    let last = *x.shape().last().unwrap();
    let eps = T::from_f64(eps);
    let inv_n = T::one() / T::from_f64(last as f64);
    let mut data = vec![T::zero(); x.numel()];
    for ((out, xr), gr) in data.chunks_mut(last).zip(x.data().chunks(last)).zip(g.data().chunks(last))
    {
        let mut mean = T::zero();
        for &v in xr {
            mean = mean + v;
        }
        mean = mean * inv_n;
        let mut var = T::zero();
        for &v in xr {
            let d = v - mean;
            var = var + d * d;
        }
        var = var * inv_n;
        let inv_std = T::one() / (var + eps).sqrt();
        // y = (x−μ)·inv_std; dx = inv_std·(g − mean(g) − y·mean(g∘y))
        let mut g_mean = T::zero();
        let mut gy_mean = T::zero();
        for (&xv, &gv) in xr.iter().zip(gr) {
            let y = (xv - mean) * inv_std;
            g_mean = g_mean + gv;
            gy_mean = gy_mean + gv * y;
        }
        g_mean = g_mean * inv_n;
        gy_mean = gy_mean * inv_n;
        for ((o, &xv), &gv) in out.iter_mut().zip(xr).zip(gr) {
            let y = (xv - mean) * inv_std;
            *o = inv_std * (gv - g_mean - y * gy_mean);
        }
    }
    Array::from_vec(x.shape().to_vec(), data)
}

// ── Segmented multi-head linear attention kernels ──────────────────────────

fn check_attention_shapes<T: Scalar>(
    q: &Array<T>,
    k: &Array<T>,
    v: &Array<T>,
    seg_len: usize,
    heads: usize,
) -> Result<()> {
    if q.rank() != 2 || q.shape() != k.shape() || q.shape() != v.shape() {
        return Err(ArrayError::ShapeMismatch {
            op: "linear_attention",
            lhs: fmt_shape(q.shape()),
            rhs: fmt_shape(if q.shape() != k.shape() { k.shape() } else { v.shape() }),
        });
    }
    let (rows, d) = (q.shape()[0], q.shape()[1]);
    if seg_len == 0 || rows % seg_len != 0 || heads == 0 || d % heads != 0 {
        return Err(ArrayError::Invalid {
            op: "linear_attention",
            what: format!("rows {rows} not divisible by seg_len {seg_len}, or width {d} by heads {heads}"),
        });
    }
    Ok(())
}

fn phi<T: Scalar>(x: T) -> T {
    elu(x) + T::one()
}

/// Right-associated attention per segment and head:
/// out_i = Φ(q_i)ᵀ(ΣⱼΦ(k_j)v_jᵀ) / (Φ(q_i)ᵀ ΣⱼΦ(k_j) + eps).
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_attention_fwd<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    d: usize,
    seg_len: usize,
    heads: usize,
    eps: f64,
    out: &mut [T],
) {
    let n_seg = q.len() / (seg_len * d);
    let run = |seg: usize, out_seg: &mut [T]| {
        let base = seg * seg_len * d;
        attention_segment_fwd(
            &q[base..base + seg_len * d],
            &k[base..base + seg_len * d],
            &v[base..base + seg_len * d],
            d,
            heads,
            T::from_f64(eps),
            out_seg,
        );
    };
    if n_seg >= 2 && seg_len * d * d >= 1 << 18 && rayon::current_num_threads() > 1 {
        use rayon::prelude::*;
        out.par_chunks_mut(seg_len * d).enumerate().for_each(|(seg, o)| run(seg, o));
    } else {
        for (seg, o) in out.chunks_mut(seg_len * d).enumerate() {
            run(seg, o);
        }
    }
}

fn attention_segment_fwd<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    d: usize,
    heads: usize,
    eps: T,
    out: &mut [T],
) {
    let dh = d / heads;
    let n = q.len() / d;
    let mut kv = vec![T::zero(); dh * dh];
    let mut ksum = vec![T::zero(); dh];
    for h in 0..heads {
        let off = h * dh;
        kv.iter_mut().for_each(|x| *x = T::zero());
        ksum.iter_mut().for_each(|x| *x = T::zero());
        for j in 0..n {
            let krow = &k[j * d + off..j * d + off + dh];
            let vrow = &v[j * d + off..j * d + off + dh];
            for (r, &kx) in krow.iter().enumerate() {
                let pk = phi(kx);
                ksum[r] = ksum[r] + pk;
                let dst = &mut kv[r * dh..(r + 1) * dh];
                for (o, &vx) in dst.iter_mut().zip(vrow) {
                    *o = *o + pk * vx;
                }
            }
        }
        for i in 0..n {
            let qrow = &q[i * d + off..i * d + off + dh];
            let orow = &mut out[i * d + off..i * d + off + dh];
            let mut den = eps;
            orow.iter_mut().for_each(|x| *x = T::zero());
            for (r, &qx) in qrow.iter().enumerate() {
                let pq = phi(qx);
                den = den + pq * ksum[r];
                let src = &kv[r * dh..(r + 1) * dh];
                for (o, &m) in orow.iter_mut().zip(src) {
                    *o = *o + pq * m;
                }
            }
            let inv = T::one() / den;
            orow.iter_mut().for_each(|x| *x = *x * inv);
        }
    }
}

/// Adjoint of [`linear_attention_fwd`]. With P=Φ(Q), U=Φ(K), M=UᵀV, s=Uᵀ1,
/// D_i = P_i·s + eps, O_i = P_i·M/D_i:
///   dP = (dO·Mᵀ)/D + dD⊗s,  dD_i = −(dO_i·O_i)/D_i,
///   dM = Pᵀ(dO/D),  ds = PᵀdD,  dV = U·dM,  dU = V·dMᵀ + 1⊗ds,
/// then dQ = dP∘Φ'(Q), dK = dU∘Φ'(K).
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_attention_bwd<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    go: &[T],
    d: usize,
    seg_len: usize,
    heads: usize,
    eps: f64,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n_seg = q.len() / (seg_len * d);
    let mut dq = vec![T::zero(); q.len()];
    let mut dk = vec![T::zero(); k.len()];
    let mut dv = vec![T::zero(); v.len()];
    let chunk = seg_len * d;
    let run = |seg: usize, dq_seg: &mut [T], dk_seg: &mut [T], dv_seg: &mut [T]| {
        let base = seg * chunk;
        attention_segment_bwd(
            &q[base..base + chunk],
            &k[base..base + chunk],
            &v[base..base + chunk],
            &go[base..base + chunk],
            d,
            heads,
            T::from_f64(eps),
            dq_seg,
            dk_seg,
            dv_seg,
        );
    };
    if n_seg >= 2 && seg_len * d * d >= 1 << 18 && rayon::current_num_threads() > 1 {
        use rayon::prelude::*;
        dq.par_chunks_mut(chunk)
            .zip(dk.par_chunks_mut(chunk))
            .zip(dv.par_chunks_mut(chunk))
            .enumerate()
            .for_each(|(seg, ((a, b), c))| run(seg, a, b, c));
    } else {
        for (seg, ((a, b), c)) in
            dq.chunks_mut(chunk).zip(dk.chunks_mut(chunk)).zip(dv.chunks_mut(chunk)).enumerate()
        {
            run(seg, a, b, c);
        }
    }
    (dq, dk, dv)
}

#[allow(clippy::too_many_arguments)]
fn attention_segment_bwd<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    go: &[T],
    d: usize,
    heads: usize,
    eps: T,
    dq: &mut [T],
    dk: &mut [T],
    dv: &mut [T],
) {
    let dh = d / heads;
    let n = q.len() / d;
    let mut kv = vec![T::zero(); dh * dh];
    let mut ksum = vec![T::zero(); dh];
    let mut dm = vec![T::zero(); dh * dh];
    let mut ds = vec![T::zero(); dh];
    let mut num = vec![T::zero(); dh];
    for h in 0..heads {
        let off = h * dh;
        kv.iter_mut().for_each(|x| *x = T::zero());
        ksum.iter_mut().for_each(|x| *x = T::zero());
        dm.iter_mut().for_each(|x| *x = T::zero());
        ds.iter_mut().for_each(|x| *x = T::zero());
        for j in 0..n {
            let krow = &k[j * d + off..j * d + off + dh];
            let vrow = &v[j * d + off..j * d + off + dh];
            for (r, &kx) in krow.iter().enumerate() {
                let pk = phi(kx);
                ksum[r] = ksum[r] + pk;
                let dst = &mut kv[r * dh..(r + 1) * dh];
                for (o, &vx) in dst.iter_mut().zip(vrow) {
                    *o = *o + pk * vx;
                }
            }
        }
        for i in 0..n {
            let qrow = &q[i * d + off..i * d + off + dh];
            let grow = &go[i * d + off..i * d + off + dh];
            // Recompute numerator and denominator of row i.
            num.iter_mut().for_each(|x| *x = T::zero());
            let mut den = eps;
            for (r, &qx) in qrow.iter().enumerate() {
                let pq = phi(qx);
                den = den + pq * ksum[r];
                let src = &kv[r * dh..(r + 1) * dh];
                for (o, &m) in num.iter_mut().zip(src) {
                    *o = *o + pq * m;
                }
            }
            let inv = T::one() / den;
            // dD_i = −(go_i · O_i)/D_i = −(go_i · num)·inv²
            let mut g_dot_num = T::zero();
            for (&gv, &nv) in grow.iter().zip(&num) {
                g_dot_num = g_dot_num + gv * nv;
            }
            let ddi = -g_dot_num * inv * inv;
            // dP_i[r] = (go_i · M[r,:])·inv + dD_i·ksum[r]; dM += P_i ⊗ go_i·inv; ds += dD_i·P_i
            for (r, &qx) in qrow.iter().enumerate() {
                let pq = phi(qx);
                let mrow = &kv[r * dh..(r + 1) * dh];
                let mut g_dot_m = T::zero();
                for (&gv, &mv) in grow.iter().zip(mrow) {
                    g_dot_m = g_dot_m + gv * mv;
                }
                let dpr = g_dot_m * inv + ddi * ksum[r];
                dq[i * d + off + r] = dpr * elu_prime(qx);
                let dmrow = &mut dm[r * dh..(r + 1) * dh];
                for (o, &gv) in dmrow.iter_mut().zip(grow) {
                    *o = *o + pq * gv * inv;
                }
                ds[r] = ds[r] + ddi * pq;
            }
        }
        // dV = U·dM; dU = V·dMᵀ + 1⊗ds; dK = dU∘Φ'(K)
        for j in 0..n {
            let krow = &k[j * d + off..j * d + off + dh];
            let vrow = &v[j * d + off..j * d + off + dh];
            for (r, &kx) in krow.iter().enumerate() {
                let pk = phi(kx);
                let dmrow = &dm[r * dh..(r + 1) * dh];
                let dvrow = &mut dv[j * d + off..j * d + off + dh];
                let mut du = ds[r];
                for ((&mv, o), &vx) in dmrow.iter().zip(dvrow.iter_mut()).zip(vrow) {
                    *o = *o + pk * mv;
                    du = du + vx * mv;
                }
                dk[j * d + off + r] = du * elu_prime(kx);
            }
        }
    }
}
