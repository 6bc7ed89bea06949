//! Recorded forward computation and reverse traversal.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::linalg::{matmul_nn, matmul_nt, matmul_tn};
use super::{Tensor, TensorError, TensorResult};
use crate::math;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Attention visibility pattern.
#[derive(Debug, Clone, PartialEq)]
pub enum AttentionMask {
    /// Every query position attends to every key position.
    None,
    /// Query position i attends to key positions j <= i.
    Causal,
    /// Arbitrary per-(query, key) visibility, row-major `tq * tk`.
    /// Fully masked rows produce an all-zero output row.
    Explicit(Vec<bool>),
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { a: NodeId, c: f64 },
    MatMul { a: NodeId, b: NodeId },
    Concat { parts: Vec<NodeId>, axis: usize },
    Slice { a: NodeId, axis: usize, start: usize },
    Reshape { a: NodeId },
    Gather { table: NodeId, ids: Vec<usize> },
    Patchify { a: NodeId, patch: usize },
    Gelu { a: NodeId },
    LayerNorm { a: NodeId, eps: f64 },
    Softmax { a: NodeId },
    LogSoftmax { a: NodeId },
    Attention { q: NodeId, k: NodeId, v: NodeId, probs: Vec<f64>, scale: f64 },
    CrossEntropy { logits: NodeId, targets: Vec<usize> },
    Sum { a: NodeId },
    Mean { a: NodeId },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients of a scalar loss with respect to every tracked leaf.
///
/// Tracked leaves that do not lie on any path to the loss map to exact zeros.
#[derive(Debug, Clone, Default)]
pub struct GradientRecord {
    grads: BTreeMap<usize, Tensor>,
}

impl GradientRecord {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(&id.0)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.remove(&id.0)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Tensor)> {
        self.grads.iter().map(|(&i, t)| (NodeId(i), t))
    }
}

/// Append-only recording of forward operations.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Inserts a tensor as a leaf; gradient tracking follows `requires_grad`.
    pub fn leaf(&mut self, t: Tensor) -> NodeId {
        let needs = t.requires_grad();
        self.push(t, Op::Leaf, needs)
    }

    /// Inserts a tensor as an untracked constant.
    pub fn constant(&mut self, mut t: Tensor) -> NodeId {
        t.requires_grad = false;
        self.push(t, Op::Leaf, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId) -> TensorResult<()> {
        if id.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(TensorError::UnknownNode { id: id.0 })
        }
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    // ---- elementwise ops -------------------------------------------------

    /// Broadcast check: rhs must equal lhs, hold a single element, or be a
    /// suffix of lhs (tiled over the leading batch dimensions).
    fn broadcast_ok(op: &'static str, lhs: &[usize], rhs: &[usize]) -> TensorResult<()> {
        let ok = rhs.iter().product::<usize>() == 1
            || lhs == rhs
            || (rhs.len() <= lhs.len() && lhs[lhs.len() - rhs.len()..] == *rhs);
        if ok {
            Ok(())
        } else {
            Err(TensorError::ShapeMismatch {
                op,
                lhs: lhs.to_vec(),
                rhs: rhs.to_vec(),
            })
        }
    }

    fn elementwise(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> TensorResult<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        Self::broadcast_ok(op_name, ta.shape(), tb.shape())?;
        let bn = tb.numel();
        let data: Vec<f64> = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, tb.data()[i % bn]))
            .collect();
        let value = Tensor {
            shape: ta.shape().to_vec(),
            data,
            requires_grad: false,
        };
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, op, needs))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> TensorResult<NodeId> {
        self.elementwise("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> TensorResult<NodeId> {
        self.elementwise("subtract", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> TensorResult<NodeId> {
        self.elementwise("elementwise-multiply", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    /// Multiplication by a compile-time constant (not a tracked operand).
    pub fn scale(&mut self, a: NodeId, c: f64) -> TensorResult<NodeId> {
        self.check(a)?;
        let value = self.nodes[a.0].value.map(|x| x * c);
        let needs = self.needs(a);
        Ok(self.push(value, Op::Scale { a, c }, needs))
    }

    // ---- matmul ----------------------------------------------------------

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> TensorResult<NodeId> {
        self.check(a)?;
        self.check(b)?;
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matrix-multiply",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = matmul_nn(ta.data(), tb.data(), m, k, n);
        let value = Tensor {
            shape: vec![m, n],
            data,
            requires_grad: false,
        };
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::MatMul { a, b }, needs))
    }

    // ---- structural ops --------------------------------------------------

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> TensorResult<NodeId> {
        if parts.is_empty() {
            return Err(TensorError::EmptyTensor { op: "concatenate" });
        }
        for &p in parts {
            self.check(p)?;
        }
        let first = self.nodes[parts[0].0].value.shape().to_vec();
        if axis >= first.len() {
            return Err(TensorError::BadArgument {
                op: "concatenate",
                msg: format!("axis {axis} out of range for shape {first:?}"),
            });
        }
        let mut axis_total = 0;
        for &p in parts {
            let s = self.nodes[p.0].value.shape();
            let compatible = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(d, (&x, &y))| d == axis || x == y);
            if !compatible {
                return Err(TensorError::ShapeMismatch {
                    op: "concatenate",
                    lhs: first.clone(),
                    rhs: s.to_vec(),
                });
            }
            axis_total += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = axis_total;
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut data = vec![0.0; outer * axis_total * inner];
        let mut axis_off = 0;
        for &p in parts {
            let t = &self.nodes[p.0].value;
            let ext = t.shape()[axis];
            for o in 0..outer {
                let src = &t.data()[o * ext * inner..(o + 1) * ext * inner];
                let dst_start = (o * axis_total + axis_off) * inner;
                data[dst_start..dst_start + ext * inner].copy_from_slice(src);
            }
            axis_off += ext;
        }
        let value = Tensor {
            shape,
            data,
            requires_grad: false,
        };
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            needs,
        ))
    }

    pub fn slice(&mut self, a: NodeId, axis: usize, start: usize, len: usize) -> TensorResult<NodeId> {
        self.check(a)?;
        let t = &self.nodes[a.0].value;
        let s = t.shape();
        if axis >= s.len() || start + len > s[axis] {
            return Err(TensorError::BadArgument {
                op: "slice",
                msg: format!("range {start}..{} on axis {axis} of {s:?}", start + len),
            });
        }
        if len == 0 {
            return Err(TensorError::EmptyTensor { op: "slice" });
        }
        let mut shape = s.to_vec();
        shape[axis] = len;
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let ext = s[axis];
        let mut data = vec![0.0; outer * len * inner];
        for o in 0..outer {
            let src_start = (o * ext + start) * inner;
            let dst_start = o * len * inner;
            data[dst_start..dst_start + len * inner]
                .copy_from_slice(&t.data()[src_start..src_start + len * inner]);
        }
        let value = Tensor {
            shape,
            data,
            requires_grad: false,
        };
        let needs = self.needs(a);
        Ok(self.push(value, Op::Slice { a, axis, start }, needs))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> TensorResult<NodeId> {
        self.check(a)?;
        let t = &self.nodes[a.0].value;
        let numel: usize = shape.iter().product();
        if numel != t.numel() {
            return Err(TensorError::InvalidShape {
                shape: shape.to_vec(),
                len: t.numel(),
            });
        }
        let value = Tensor {
            shape: shape.to_vec(),
            data: t.data().to_vec(),
            requires_grad: false,
        };
        let needs = self.needs(a);
        Ok(self.push(value, Op::Reshape { a }, needs))
    }

    /// Row lookup: `table` is `[v, d]`, output is `[ids.len(), d]`.
    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> TensorResult<NodeId> {
        self.check(table)?;
        if ids.is_empty() {
            return Err(TensorError::EmptyTensor {
                op: "embedding-gather",
            });
        }
        let t = &self.nodes[table.0].value;
        let s = t.shape();
        if s.len() != 2 {
            return Err(TensorError::BadArgument {
                op: "embedding-gather",
                msg: format!("table must be 2-d, got {s:?}"),
            });
        }
        let (v, d) = (s[0], s[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(TensorError::BadArgument {
                op: "embedding-gather",
                msg: format!("id {bad} out of range for table with {v} rows"),
            });
        }
        let mut data = vec![0.0; ids.len() * d];
        for (r, &id) in ids.iter().enumerate() {
            data[r * d..(r + 1) * d].copy_from_slice(&t.data()[id * d..(id + 1) * d]);
        }
        let value = Tensor {
            shape: vec![ids.len(), d],
            data,
            requires_grad: false,
        };
        let needs = self.needs(table);
        Ok(self.push(
            value,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            needs,
        ))
    }

    /// Rearranges an `[h, w, c]` image into `[(h/p)*(w/p), p*p*c]` patch rows.
    pub fn patchify(&mut self, a: NodeId, patch: usize) -> TensorResult<NodeId> {
        self.check(a)?;
        let t = &self.nodes[a.0].value;
        let s = t.shape();
        if s.len() != 3 || patch == 0 || s[0] % patch != 0 || s[1] % patch != 0 {
            return Err(TensorError::BadArgument {
                op: "patchify",
                msg: format!("image {s:?} not divisible into {patch}x{patch} patches"),
            });
        }
        let (h, w, c) = (s[0], s[1], s[2]);
        let (ph, pw) = (h / patch, w / patch);
        let row_len = patch * patch * c;
        let mut data = vec![0.0; ph * pw * row_len];
        for pi in 0..ph {
            for pj in 0..pw {
                let row = pi * pw + pj;
                for dy in 0..patch {
                    let src = ((pi * patch + dy) * w + pj * patch) * c;
                    let dst = row * row_len + dy * patch * c;
                    data[dst..dst + patch * c].copy_from_slice(&t.data()[src..src + patch * c]);
                }
            }
        }
        let value = Tensor {
            shape: vec![ph * pw, row_len],
            data,
            requires_grad: false,
        };
        let needs = self.needs(a);
        Ok(self.push(value, Op::Patchify { a, patch }, needs))
    }

    // ---- nonlinearities over the last axis ---------------------------------

    pub fn gelu(&mut self, a: NodeId) -> TensorResult<NodeId> {
        self.check(a)?;
        let value = self.nodes[a.0]
            .value
            .map(|x| 0.5 * x * (1.0 + math::erf(x / math::sqrt(2.0))));
        let needs = self.needs(a);
        Ok(self.push(value, Op::Gelu { a }, needs))
    }

    /// Normalizes each row of the last axis to zero mean and unit variance.
    /// Affine gain/bias are separate `mul`/`add` ops.
    pub fn layer_norm(&mut self, a: NodeId, eps: f64) -> TensorResult<NodeId> {
        self.check(a)?;
        let t = &self.nodes[a.0].value;
        let (rows, cols) = last_axis(t)?;
        let mut data = vec![0.0; t.numel()];
        for r in 0..rows {
            let x = &t.data()[r * cols..(r + 1) * cols];
            let mean = x.iter().sum::<f64>() / cols as f64;
            let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / math::sqrt(var + eps);
            for (o, &v) in data[r * cols..(r + 1) * cols].iter_mut().zip(x) {
                *o = (v - mean) * inv;
            }
        }
        let value = Tensor {
            shape: t.shape().to_vec(),
            data,
            requires_grad: false,
        };
        let needs = self.needs(a);
        Ok(self.push(value, Op::LayerNorm { a, eps }, needs))
    }

    pub fn softmax(&mut self, a: NodeId) -> TensorResult<NodeId> {
        self.check(a)?;
        let t = &self.nodes[a.0].value;
        let (rows, cols) = last_axis(t)?;
        let mut data = vec![0.0; t.numel()];
        for r in 0..rows {
            let x = &t.data()[r * cols..(r + 1) * cols];
            softmax_row(x, &mut data[r * cols..(r + 1) * cols]);
        }
        let value = Tensor {
            shape: t.shape().to_vec(),
            data,
            requires_grad: false,
        };
        let needs = self.needs(a);
        Ok(self.push(value, Op::Softmax { a }, needs))
    }

    pub fn log_softmax(&mut self, a: NodeId) -> TensorResult<NodeId> {
        self.check(a)?;
        let t = &self.nodes[a.0].value;
        let (rows, cols) = last_axis(t)?;
        let mut data = vec![0.0; t.numel()];
        for r in 0..rows {
            let x = &t.data()[r * cols..(r + 1) * cols];
            let lse = log_sum_exp(x);
            for (o, &v) in data[r * cols..(r + 1) * cols].iter_mut().zip(x) {
                *o = v - lse;
            }
        }
        let value = Tensor {
            shape: t.shape().to_vec(),
            data,
            requires_grad: false,
        };
        let needs = self.needs(a);
        Ok(self.push(value, Op::LogSoftmax { a }, needs))
    }

    // ---- attention ---------------------------------------------------------

    /// Scaled dot-product attention: `softmax(q k^T / sqrt(d) + mask) v`.
    ///
    /// `q` is `[tq, d]`, `k` is `[tk, d]`, `v` is `[tk, dv]`.
    pub fn attention(
        &mut self,
        q: NodeId,
        k: NodeId,
        v: NodeId,
        mask: &AttentionMask,
    ) -> TensorResult<NodeId> {
        self.check(q)?;
        self.check(k)?;
        self.check(v)?;
        let (tq_t, tk_t, tv_t) = (
            &self.nodes[q.0].value,
            &self.nodes[k.0].value,
            &self.nodes[v.0].value,
        );
        let (sq, sk, sv) = (tq_t.shape(), tk_t.shape(), tv_t.shape());
        if sq.len() != 2 || sk.len() != 2 || sq[1] != sk[1] {
            return Err(TensorError::ShapeMismatch {
                op: "scaled-dot-product-attention",
                lhs: sq.to_vec(),
                rhs: sk.to_vec(),
            });
        }
        if sv.len() != 2 || sv[0] != sk[0] {
            return Err(TensorError::ShapeMismatch {
                op: "scaled-dot-product-attention",
                lhs: sk.to_vec(),
                rhs: sv.to_vec(),
            });
        }
        let (tq, d) = (sq[0], sq[1]);
        let (tk, dv) = (sv[0], sv[1]);
        if let AttentionMask::Explicit(m) = mask {
            if m.len() != tq * tk {
                return Err(TensorError::BadArgument {
                    op: "scaled-dot-product-attention",
                    msg: format!("mask length {} != {tq}x{tk}", m.len()),
                });
            }
        }
        let scale = 1.0 / math::sqrt(d as f64);
        let scores = matmul_nt(tq_t.data(), tk_t.data(), tq, d, tk);
        let mut probs = vec![0.0; tq * tk];
        for i in 0..tq {
            let allowed = |j: usize| match mask {
                AttentionMask::None => true,
                AttentionMask::Causal => j <= i,
                AttentionMask::Explicit(m) => m[i * tk + j],
            };
            let row = &scores[i * tk..(i + 1) * tk];
            let mut max = f64::NEG_INFINITY;
            for (j, &s) in row.iter().enumerate() {
                if allowed(j) && s * scale > max {
                    max = s * scale;
                }
            }
            if max == f64::NEG_INFINITY {
                continue; // fully masked row: probabilities stay zero
            }
            let prow = &mut probs[i * tk..(i + 1) * tk];
            let mut z = 0.0;
            for (j, &s) in row.iter().enumerate() {
                if allowed(j) {
                    let e = math::exp(s * scale - max);
                    prow[j] = e;
                    z += e;
                }
            }
            for p in prow.iter_mut() {
                *p /= z;
            }
        }
        let data = matmul_nn(&probs, tv_t.data(), tq, tk, dv);
        let value = Tensor {
            shape: vec![tq, dv],
            data,
            requires_grad: false,
        };
        let needs = self.needs(q) || self.needs(k) || self.needs(v);
        Ok(self.push(
            value,
            Op::Attention {
                q,
                k,
                v,
                probs,
                scale,
            },
            needs,
        ))
    }

    // ---- losses and reductions ----------------------------------------------

    /// Fused log-softmax + negative log-likelihood.
    ///
    /// 1-d logits with one target give a scalar; `[t, v]` logits with `t`
    /// targets give a `[t]` vector of per-position losses.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[usize]) -> TensorResult<NodeId> {
        self.check(logits)?;
        if targets.is_empty() {
            return Err(TensorError::EmptyTensor {
                op: "cross-entropy-from-logits",
            });
        }
        let t = &self.nodes[logits.0].value;
        let (rows, cols) = last_axis(t)?;
        if t.shape().len() > 2 {
            return Err(TensorError::BadArgument {
                op: "cross-entropy-from-logits",
                msg: format!("logits must be 1-d or 2-d, got {:?}", t.shape()),
            });
        }
        if targets.len() != rows {
            return Err(TensorError::BadArgument {
                op: "cross-entropy-from-logits",
                msg: format!("{} targets for {rows} rows", targets.len()),
            });
        }
        if let Some(&bad) = targets.iter().find(|&&c| c >= cols) {
            return Err(TensorError::BadArgument {
                op: "cross-entropy-from-logits",
                msg: format!("class {bad} out of range for {cols} logits"),
            });
        }
        let mut data = Vec::with_capacity(rows);
        for (r, &target) in targets.iter().enumerate() {
            let x = &t.data()[r * cols..(r + 1) * cols];
            data.push(log_sum_exp(x) - x[target]);
        }
        let shape = if t.shape().len() == 1 {
            Vec::new()
        } else {
            vec![rows]
        };
        let value = Tensor {
            shape,
            data,
            requires_grad: false,
        };
        let needs = self.needs(logits);
        Ok(self.push(
            value,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
            },
            needs,
        ))
    }

    pub fn sum(&mut self, a: NodeId) -> TensorResult<NodeId> {
        self.check(a)?;
        let total = self.nodes[a.0].value.data().iter().sum();
        let needs = self.needs(a);
        Ok(self.push(Tensor::scalar(total), Op::Sum { a }, needs))
    }

    pub fn mean(&mut self, a: NodeId) -> TensorResult<NodeId> {
        self.check(a)?;
        let t = &self.nodes[a.0].value;
        let m = t.data().iter().sum::<f64>() / t.numel() as f64;
        let needs = self.needs(a);
        Ok(self.push(Tensor::scalar(m), Op::Mean { a }, needs))
    }

    // ---- reverse traversal ----------------------------------------------------

    /// Reverse-mode gradients of a recorded scalar with respect to every
    /// tracked leaf. Deterministic: the traversal and accumulation order is a
    /// pure function of the recording.
    pub fn backward(&self, loss: NodeId) -> TensorResult<GradientRecord> {
        self.check(loss)?;
        let loss_node = &self.nodes[loss.0];
        if !loss_node.value.is_scalar() {
            return Err(TensorError::NotScalar {
                shape: loss_node.value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            if grads[idx].is_none() || !self.nodes[idx].needs_grad {
                continue;
            }
            let g = grads[idx].take().unwrap();
            self.propagate(idx, &g, &mut grads);
        }

        let mut record = GradientRecord::default();
        for (idx, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.value.requires_grad() {
                let data = grads[idx]
                    .take()
                    .unwrap_or_else(|| vec![0.0; node.value.numel()]);
                record.grads.insert(
                    idx,
                    Tensor {
                        shape: node.value.shape().to_vec(),
                        data,
                        requires_grad: false,
                    },
                );
            }
        }
        Ok(record)
    }

    fn accumulate(grads: &mut [Option<Vec<f64>>], node: &Node, id: NodeId, add: impl FnOnce(&mut [f64])) {
        if !node.needs_grad {
            return;
        }
        let slot = grads[id.0].get_or_insert_with(|| vec![0.0; node.value.numel()]);
        add(slot);
    }

    #[allow(clippy::too_many_lines)]
    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {
                // own gradient restored by the collection pass
                grads[idx] = Some(g.to_vec());
            }
            Op::Add { a, b } => {
                Self::accumulate(grads, &self.nodes[a.0], *a, |ga| {
                    for (x, &u) in ga.iter_mut().zip(g) {
                        *x += u;
                    }
                });
                let bn = self.nodes[b.0].value.numel();
                Self::accumulate(grads, &self.nodes[b.0], *b, |gb| {
                    for (i, &u) in g.iter().enumerate() {
                        gb[i % bn] += u;
                    }
                });
            }
            Op::Sub { a, b } => {
                Self::accumulate(grads, &self.nodes[a.0], *a, |ga| {
                    for (x, &u) in ga.iter_mut().zip(g) {
                        *x += u;
                    }
                });
                let bn = self.nodes[b.0].value.numel();
                Self::accumulate(grads, &self.nodes[b.0], *b, |gb| {
                    for (i, &u) in g.iter().enumerate() {
                        gb[i % bn] -= u;
                    }
                });
            }
            Op::Mul { a, b } => {
                let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let bn = tb.numel();
                Self::accumulate(grads, &self.nodes[a.0], *a, |ga| {
                    for (i, &u) in g.iter().enumerate() {
                        ga[i] += u * tb.data()[i % bn];
                    }
                });
                Self::accumulate(grads, &self.nodes[b.0], *b, |gb| {
                    for (i, &u) in g.iter().enumerate() {
                        gb[i % bn] += u * ta.data()[i];
                    }
                });
            }
            Op::Scale { a, c } => {
                let c = *c;
                Self::accumulate(grads, &self.nodes[a.0], *a, |ga| {
                    for (x, &u) in ga.iter_mut().zip(g) {
                        *x += u * c;
                    }
                });
            }
            Op::MatMul { a, b } => {
                let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[1];
                if self.nodes[a.0].needs_grad {
                    let da = matmul_nt(g, tb.data(), m, n, k);
                    Self::accumulate(grads, &self.nodes[a.0], *a, |ga| {
                        for (x, &u) in ga.iter_mut().zip(&da) {
                            *x += u;
                        }
                    });
                }
                if self.nodes[b.0].needs_grad {
                    let db = matmul_tn(ta.data(), g, m, k, n);
                    Self::accumulate(grads, &self.nodes[b.0], *b, |gb| {
                        for (x, &u) in gb.iter_mut().zip(&db) {
                            *x += u;
                        }
                    });
                }
            }
            Op::Concat { parts, axis } => {
                let out_shape = node.value.shape();
                let outer: usize = out_shape[..*axis].iter().product();
                let inner: usize = out_shape[*axis + 1..].iter().product();
                let total_ext = out_shape[*axis];
                let mut axis_off = 0;
                for &p in parts {
                    let ext = self.nodes[p.0].value.shape()[*axis];
                    Self::accumulate(grads, &self.nodes[p.0], p, |gp| {
                        for o in 0..outer {
                            let src_start = (o * total_ext + axis_off) * inner;
                            let dst_start = o * ext * inner;
                            for i in 0..ext * inner {
                                gp[dst_start + i] += g[src_start + i];
                            }
                        }
                    });
                    axis_off += ext;
                }
            }
            Op::Slice { a, axis, start } => {
                let src_shape = self.nodes[a.0].value.shape();
                let outer: usize = src_shape[..*axis].iter().product();
                let inner: usize = src_shape[*axis + 1..].iter().product();
                let ext = src_shape[*axis];
                let len = node.value.shape()[*axis];
                Self::accumulate(grads, &self.nodes[a.0], *a, |ga| {
                    for o in 0..outer {
                        let dst_start = (o * ext + start) * inner;
                        let src_start = o * len * inner;
                        for i in 0..len * inner {
                            ga[dst_start + i] += g[src_start + i];
                        }
                    }
                });
            }
            Op::Reshape { a } => {
                Self::accumulate(grads, &self.nodes[a.0], *a, |ga| {
                    for (x, &u) in ga.iter_mut().zip(g) {
                        *x += u;
                    }
                });
            }
            Op::Gather { table, ids } => {
                let d = node.value.shape()[1];
                Self::accumulate(grads, &self.nodes[table.0], *table, |gt| {
                    for (r, &id) in ids.iter().enumerate() {
                        for c in 0..d {
                            gt[id * d + c] += g[r * d + c];
                        }
                    }
                });
            }
            Op::Patchify { a, patch } => {
                let s = self.nodes[a.0].value.shape();
                let (w, c) = (s[1], s[2]);
                let pw = w / patch;
                let row_len = patch * patch * c;
                Self::accumulate(grads, &self.nodes[a.0], *a, |ga| {
                    for row in 0..node.value.shape()[0] {
                        let (pi, pj) = (row / pw, row % pw);
                        for dy in 0..*patch {
                            let dst = ((pi * patch + dy) * w + pj * patch) * c;
                            let src = row * row_len + dy * patch * c;
                            for i in 0..patch * c {
                                ga[dst + i] += g[src + i];
                            }
                        }
                    }
                });
            }
            Op::Gelu { a } => {
                let ta = &self.nodes[a.0].value;
                Self::accumulate(grads, &self.nodes[a.0], *a, |ga| {
                    let inv_sqrt_2pi = 1.0 / math::sqrt(2.0 * core::f64::consts::PI);
                    for (i, &u) in g.iter().enumerate() {
                        let x = ta.data()[i];
                        let phi_cdf = 0.5 * (1.0 + math::erf(x / math::sqrt(2.0)));
                        let phi_pdf = inv_sqrt_2pi * math::exp(-0.5 * x * x);
                        ga[i] += u * (phi_cdf + x * phi_pdf);
                    }
                });
            }
            Op::LayerNorm { a, eps } => {
                let ta = &self.nodes[a.0].value;
                let (rows, cols) = last_axis(ta).expect("validated in forward");
                let y = node.value.data();
                Self::accumulate(grads, &self.nodes[a.0], *a, |ga| {
                    for r in 0..rows {
                        let x = &ta.data()[r * cols..(r + 1) * cols];
                        let yr = &y[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let mean = x.iter().sum::<f64>() / cols as f64;
                        let var =
                            x.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
                        let inv = 1.0 / math::sqrt(var + eps);
                        let g_mean = gr.iter().sum::<f64>() / cols as f64;
                        let gy_mean = gr.iter().zip(yr).map(|(&u, &yv)| u * yv).sum::<f64>()
                            / cols as f64;
                        for i in 0..cols {
                            ga[r * cols + i] += inv * (gr[i] - g_mean - yr[i] * gy_mean);
                        }
                    }
                });
            }
            Op::Softmax { a } => {
                let (rows, cols) = last_axis(&node.value).expect("validated in forward");
                let p = node.value.data();
                Self::accumulate(grads, &self.nodes[a.0], *a, |ga| {
                    for r in 0..rows {
                        let pr = &p[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let dot = gr.iter().zip(pr).map(|(&u, &pv)| u * pv).sum::<f64>();
                        for i in 0..cols {
                            ga[r * cols + i] += pr[i] * (gr[i] - dot);
                        }
                    }
                });
            }
            Op::LogSoftmax { a } => {
                let (rows, cols) = last_axis(&node.value).expect("validated in forward");
                let y = node.value.data();
                Self::accumulate(grads, &self.nodes[a.0], *a, |ga| {
                    for r in 0..rows {
                        let yr = &y[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let total: f64 = gr.iter().sum();
                        for i in 0..cols {
                            ga[r * cols + i] += gr[i] - math::exp(yr[i]) * total;
                        }
                    }
                });
            }
            Op::Attention {
                q,
                k,
                v,
                probs,
                scale,
            } => {
                let (tq_t, tk_t, tv_t) = (
                    &self.nodes[q.0].value,
                    &self.nodes[k.0].value,
                    &self.nodes[v.0].value,
                );
                let (tq, d) = (tq_t.shape()[0], tq_t.shape()[1]);
                let (tk, dv) = (tv_t.shape()[0], tv_t.shape()[1]);
                if self.nodes[v.0].needs_grad {
                    let dv_grad = matmul_tn(probs, g, tq, tk, dv);
                    Self::accumulate(grads, &self.nodes[v.0], *v, |gv| {
                        for (x, &u) in gv.iter_mut().zip(&dv_grad) {
                            *x += u;
                        }
                    });
                }
                if self.nodes[q.0].needs_grad || self.nodes[k.0].needs_grad {
                    let dp = matmul_nt(g, tv_t.data(), tq, dv, tk);
                    let mut ds = vec![0.0; tq * tk];
                    for i in 0..tq {
                        let pr = &probs[i * tk..(i + 1) * tk];
                        let dpr = &dp[i * tk..(i + 1) * tk];
                        let dot = dpr.iter().zip(pr).map(|(&u, &pv)| u * pv).sum::<f64>();
                        for j in 0..tk {
                            ds[i * tk + j] = pr[j] * (dpr[j] - dot) * scale;
                        }
                    }
                    if self.nodes[q.0].needs_grad {
                        let dq = matmul_nn(&ds, tk_t.data(), tq, tk, d);
                        Self::accumulate(grads, &self.nodes[q.0], *q, |gq| {
                            for (x, &u) in gq.iter_mut().zip(&dq) {
                                *x += u;
                            }
                        });
                    }
                    if self.nodes[k.0].needs_grad {
                        let dk = matmul_tn(&ds, tq_t.data(), tq, tk, d);
                        Self::accumulate(grads, &self.nodes[k.0], *k, |gk| {
                            for (x, &u) in gk.iter_mut().zip(&dk) {
                                *x += u;
                            }
                        });
                    }
                }
            }
            Op::CrossEntropy { logits, targets } => {
                let tl = &self.nodes[logits.0].value;
                let (rows, cols) = last_axis(tl).expect("validated in forward");
                Self::accumulate(grads, &self.nodes[logits.0], *logits, |gl| {
                    let mut p = vec![0.0; cols];
                    for r in 0..rows {
                        let x = &tl.data()[r * cols..(r + 1) * cols];
                        softmax_row(x, &mut p);
                        let u = g[r];
                        for i in 0..cols {
                            gl[r * cols + i] += u * p[i];
                        }
                        gl[r * cols + targets[r]] -= u;
                    }
                });
            }
            Op::Sum { a } => {
                let u = g[0];
                Self::accumulate(grads, &self.nodes[a.0], *a, |ga| {
                    for x in ga.iter_mut() {
                        *x += u;
                    }
                });
            }
            Op::Mean { a } => {
                let n = self.nodes[a.0].value.numel() as f64;
                let u = g[0] / n;
                Self::accumulate(grads, &self.nodes[a.0], *a, |ga| {
                    for x in ga.iter_mut() {
                        *x += u;
                    }
                });
            }
        }
    }
}

/// Interprets a tensor as rows over its last axis. Scalars are one 1-element row.
fn last_axis(t: &Tensor) -> TensorResult<(usize, usize)> {
    let s = t.shape();
    let cols = *s.last().unwrap_or(&1);
    Ok((t.numel() / cols, cols))
}

fn softmax_row(x: &[f64], out: &mut [f64]) {
    let max = x.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut z = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        let e = math::exp(v - max);
        *o = e;
        z += e;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
}

fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let sum: f64 = x.iter().map(|&v| math::exp(v - max)).sum();
    max + math::ln(sum)
}
