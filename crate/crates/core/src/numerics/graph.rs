//! Tape of tensor operations with reverse-mode differentiation.
//!
//! Nodes are appended in execution order, so the node list is already a
//! topological order and the backward sweep simply walks it in reverse.

use std::collections::BTreeMap;

use super::kernels::{self, gemm_nn, gemm_nt, gemm_tn};
use super::tensor::{axis_extents, check_axis, check_finite, reduced_shape};
use super::{NumericsError, SeededRng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: NodeId, b: NodeId },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    BroadcastTo(NodeId),
    Relu(NodeId),
    Gelu(NodeId),
    Sigmoid(NodeId),
    Log(NodeId),
    Softmax { x: NodeId, axis: usize },
    LogSumExp { x: NodeId, axis: usize },
    LayerNorm { x: NodeId, xhat: Vec<f64>, rstd: Vec<f64> },
    Dropout { x: NodeId, mask: Vec<f64> },
    Embedding { table: NodeId, indices: Vec<usize> },
    Sum(NodeId),
    Mean(NodeId),
    SumAxis { x: NodeId, axis: usize },
    MeanAxis { x: NodeId, axis: usize },
    Reshape(NodeId),
    Permute { x: NodeId, perm: Vec<usize> },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
    trainable: bool,
}

/// Recorded computation. Build it by calling the op methods, then call
/// [`Graph::backward`] on a scalar node.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every trainable leaf.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    by_node: BTreeMap<NodeId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.by_node.get(&id)
    }

    pub fn len(&self) -> usize {
        self.by_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_node.is_empty()
    }
}

/// How the right operand of a binary op lines up with the left one.
fn broadcast_repeat(lhs: &[usize], rhs: &[usize]) -> Option<()> {
    let rn: usize = rhs.iter().product();
    if rn == 1 {
        return Some(());
    }
    if rhs.len() > lhs.len() {
        return None;
    }
    (lhs[lhs.len() - rhs.len()..] == *rhs).then_some(())
}


impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor, inputs: &[NodeId]) -> Result<NodeId, NumericsError> {
        check_finite(value.data())?;
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
            trainable: false,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn check_id(&self, id: NodeId) -> Result<(), NumericsError> {
        if id.0 >= self.nodes.len() {
            return Err(NumericsError::UnknownNode(id.0));
        }
        Ok(())
    }

    /// Trainable leaf.
    pub fn parameter(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            requires_grad: true,
            trainable: true,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            requires_grad: false,
            trainable: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Batched matrix product. `a` is `[..., m, k]`; `b` is either `[k, n]`
    /// (shared across the batch) or `[..., k, n]` with the same leading axes.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.check_id(a)?;
        self.check_id(b)?;
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        let mismatch = || NumericsError::ShapeMismatch {
            op: "matmul",
            lhs: sa.to_vec(),
            rhs: sb.to_vec(),
        };
        if sa.len() < 2 || sb.len() < 2 {
            return Err(mismatch());
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (kb, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != kb || (sb.len() > 2 && sb[..sb.len() - 2] != sa[..sa.len() - 2]) {
            return Err(mismatch());
        }
        let batch: usize = sa[..sa.len() - 2].iter().product();
        let shared = sb.len() == 2;
        let mut out_shape = sa[..sa.len() - 2].to_vec();
        out_shape.extend([m, n]);
        let mut out = vec![0.0; batch * m * n];
        let (da, db) = (self.value(a).data(), self.value(b).data());
        if shared {
            gemm_nn(da, db, &mut out, batch * m, k, n);
        } else {
            for bi in 0..batch {
                gemm_nn(
                    &da[bi * m * k..(bi + 1) * m * k],
                    &db[bi * k * n..(bi + 1) * k * n],
                    &mut out[bi * m * n..(bi + 1) * m * n],
                    m,
                    k,
                    n,
                );
            }
        }
        self.push(Op::MatMul { a, b }, Tensor::from_parts(out_shape, out), &[a, b])
    }

    fn binary(
        &mut self,
        name: &'static str,
        lhs: NodeId,
        rhs: NodeId,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, NumericsError> {
        self.check_id(lhs)?;
        self.check_id(rhs)?;
        let (l, r) = (self.value(lhs), self.value(rhs));
        if broadcast_repeat(l.shape(), r.shape()).is_none() {
            return Err(NumericsError::ShapeMismatch {
                op: name,
                lhs: l.shape().to_vec(),
                rhs: r.shape().to_vec(),
            });
        }
        let rd = r.data();
        let rn = rd.len();
        let out: Vec<f64> = if rn == 1 {
            l.data().iter().map(|&a| f(a, rd[0])).collect()
        } else {
            let mut out = vec![0.0; l.numel()];
            for (o, chunk) in out.chunks_exact_mut(rn).zip(l.data().chunks_exact(rn)) {
                for ((o, &a), &b) in o.iter_mut().zip(chunk).zip(rd) {
                    *o = f(a, b);
                }
            }
            out
        };
        Ok(Tensor::from_parts(l.shape().to_vec(), out))
    }

    fn larger_first(&self, a: NodeId, b: NodeId) -> (NodeId, NodeId) {
        if self.value(a).numel() < self.value(b).numel() {
            (b, a)
        } else {
            (a, b)
        }
    }

    /// Elementwise sum. The smaller operand is broadcast over the trailing
    /// axes of the larger one (or is a single element).
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.check_id(a)?;
        self.check_id(b)?;
        let (a, b) = self.larger_first(a, b);
        let v = self.binary("add", a, b, |x, y| x + y)?;
        self.push(Op::Add(a, b), v, &[a, b])
    }

    /// `a - b`, broadcasting `b` over trailing axes of `a`.
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let v = self.binary("sub", a, b, |x, y| x - y)?;
        self.push(Op::Sub(a, b), v, &[a, b])
    }

    /// Elementwise product with the same broadcasting rule as [`Graph::add`].
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.check_id(a)?;
        self.check_id(b)?;
        let (a, b) = self.larger_first(a, b);
        let v = self.binary("mul", a, b, |x, y| x * y)?;
        self.push(Op::Mul(a, b), v, &[a, b])
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, x: NodeId, factor: f64) -> Result<NodeId, NumericsError> {
        let c = self.constant(Tensor::scalar(factor)?);
        self.mul(x, c)
    }

    /// Repeats `x` so that it has `shape`; `x`'s shape must be a suffix of
    /// `shape` or a single element.
    pub fn broadcast_to(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId, NumericsError> {
        self.check_id(x)?;
        let xs = self.value(x).shape();
        if broadcast_repeat(shape, xs).is_none() || shape.contains(&0) {
            return Err(NumericsError::ShapeMismatch {
                op: "broadcast_to",
                lhs: shape.to_vec(),
                rhs: xs.to_vec(),
            });
        }
        let xd = self.value(x).data();
        let total: usize = shape.iter().product();
        let out: Vec<f64> = (0..total).map(|i| xd[i % xd.len()]).collect();
        self.push(Op::BroadcastTo(x), Tensor::from_parts(shape.to_vec(), out), &[x])
    }

    fn unary(&mut self, x: NodeId, op: Op, f: impl Fn(f64) -> f64) -> Result<NodeId, NumericsError> {
        self.check_id(x)?;
        let v = self.value(x);
        let out = v.data().iter().map(|&a| f(a)).collect();
        let t = Tensor::from_parts(v.shape().to_vec(), out);
        self.push(op, t, &[x])
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId, NumericsError> {
        self.unary(x, Op::Relu(x), |a| a.max(0.0))
    }

    /// GELU, tanh approximation:
    /// `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`.
    pub fn gelu(&mut self, x: NodeId) -> Result<NodeId, NumericsError> {
        self.unary(x, Op::Gelu(x), kernels::gelu)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId, NumericsError> {
        self.unary(x, Op::Sigmoid(x), kernels::sigmoid)
    }

    /// Natural log; fails with a non-finite error on non-positive input.
    pub fn log(&mut self, x: NodeId) -> Result<NodeId, NumericsError> {
        self.unary(x, Op::Log(x), f64::ln)
    }

    pub fn softmax(&mut self, x: NodeId, axis: usize) -> Result<NodeId, NumericsError> {
        self.check_id(x)?;
        let v = self.value(x);
        check_axis(v.shape(), axis)?;
        let (outer, len, inner) = axis_extents(v.shape(), axis);
        let mut out = vec![0.0; v.numel()];
        kernels::softmax_strided(v.data(), &mut out, outer, len, inner);
        let t = Tensor::from_parts(v.shape().to_vec(), out);
        self.push(Op::Softmax { x, axis }, t, &[x])
    }

    /// Reduces `axis` with a stable `log Σ exp`.
    pub fn log_sum_exp(&mut self, x: NodeId, axis: usize) -> Result<NodeId, NumericsError> {
        self.check_id(x)?;
        let v = self.value(x);
        check_axis(v.shape(), axis)?;
        let (outer, len, inner) = axis_extents(v.shape(), axis);
        let mut out = vec![0.0; outer * inner];
        kernels::lse_strided(v.data(), &mut out, outer, len, inner);
        let t = Tensor::from_parts(reduced_shape(v.shape(), axis), out);
        self.push(Op::LogSumExp { x, axis }, t, &[x])
    }

    /// Normalizes the last axis to zero mean and unit variance (no affine).
    pub fn layer_norm(&mut self, x: NodeId, eps: f64) -> Result<NodeId, NumericsError> {
        self.check_id(x)?;
        let v = self.value(x);
        let d = *v.shape().last().expect("rank >= 1");
        let rows = v.numel() / d;
        let mut xhat = vec![0.0; v.numel()];
        let mut rstd = vec![0.0; rows];
        for r in 0..rows {
            let row = &v.data()[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + eps).sqrt();
            rstd[r] = rs;
            for (o, a) in xhat[r * d..(r + 1) * d].iter_mut().zip(row) {
                *o = (a - mean) * rs;
            }
        }
        let t = Tensor::from_parts(v.shape().to_vec(), xhat.clone());
        self.push(Op::LayerNorm { x, xhat, rstd }, t, &[x])
    }

    /// Inverted dropout: zeroes each element with probability `p` and scales
    /// survivors by `1 / (1 - p)`. `p == 0` returns `x` unchanged without
    /// drawing from `rng`.
    pub fn dropout(&mut self, x: NodeId, p: f64, rng: &mut SeededRng) -> Result<NodeId, NumericsError> {
        self.check_id(x)?;
        if !(0.0..1.0).contains(&p) {
            return Err(NumericsError::InvalidProbability(p));
        }
        if p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - p;
        let scale = 1.0 / keep;
        let v = self.value(x);
        let mask: Vec<f64> = (0..v.numel())
            .map(|_| if rng.uniform() < keep { scale } else { 0.0 })
            .collect();
        let out = v.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let t = Tensor::from_parts(v.shape().to_vec(), out);
        self.push(Op::Dropout { x, mask }, t, &[x])
    }

    /// Gathers rows of a `[vocab, dim]` table.
    pub fn embedding(&mut self, table: NodeId, indices: &[usize]) -> Result<NodeId, NumericsError> {
        self.check_id(table)?;
        let t = self.value(table);
        if t.rank() != 2 || indices.is_empty() {
            return Err(NumericsError::ShapeMismatch {
                op: "embedding",
                lhs: t.shape().to_vec(),
                rhs: vec![indices.len()],
            });
        }
        let (vocab, dim) = (t.shape()[0], t.shape()[1]);
        if let Some(&bad) = indices.iter().find(|&&i| i >= vocab) {
            return Err(NumericsError::IndexOutOfRange { index: bad, len: vocab });
        }
        let mut out = Vec::with_capacity(indices.len() * dim);
        for &i in indices {
            out.extend_from_slice(&t.data()[i * dim..(i + 1) * dim]);
        }
        let v = Tensor::from_parts(vec![indices.len(), dim], out);
        self.push(
            Op::Embedding {
                table,
                indices: indices.to_vec(),
            },
            v,
            &[table],
        )
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId, NumericsError> {
        self.check_id(x)?;
        let s = self.value(x).data().iter().sum();
        self.push(Op::Sum(x), Tensor::from_parts(vec![1], vec![s]), &[x])
    }

    pub fn mean(&mut self, x: NodeId) -> Result<NodeId, NumericsError> {
        self.check_id(x)?;
        let v = self.value(x);
        let s = v.data().iter().sum::<f64>() / v.numel() as f64;
        self.push(Op::Mean(x), Tensor::from_parts(vec![1], vec![s]), &[x])
    }

    fn reduce_axis(&self, x: NodeId, axis: usize, divide: bool) -> Result<Tensor, NumericsError> {
        self.check_id(x)?;
        let v = self.value(x);
        check_axis(v.shape(), axis)?;
        let (outer, len, inner) = axis_extents(v.shape(), axis);
        let mut out = vec![0.0; outer * inner];
        let d = v.data();
        for o in 0..outer {
            for a in 0..len {
                let src = &d[(o * len + a) * inner..(o * len + a + 1) * inner];
                for (acc, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *acc += s;
                }
            }
        }
        if divide {
            let inv = 1.0 / len as f64;
            out.iter_mut().for_each(|a| *a *= inv);
        }
        Ok(Tensor::from_parts(reduced_shape(v.shape(), axis), out))
    }

    pub fn sum_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId, NumericsError> {
        let t = self.reduce_axis(x, axis, false)?;
        self.push(Op::SumAxis { x, axis }, t, &[x])
    }

    pub fn mean_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId, NumericsError> {
        let t = self.reduce_axis(x, axis, true)?;
        self.push(Op::MeanAxis { x, axis }, t, &[x])
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId, NumericsError> {
        self.check_id(x)?;
        let v = self.value(x);
        let t = Tensor::new(shape.to_vec(), v.data().to_vec())?;
        self.push(Op::Reshape(x), t, &[x])
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: NodeId, perm: &[usize]) -> Result<NodeId, NumericsError> {
        self.check_id(x)?;
        let v = self.value(x);
        let mut seen = vec![false; v.rank()];
        if perm.len() != v.rank()
            || perm
                .iter()
                .any(|&p| p >= v.rank() || std::mem::replace(&mut seen[p], true))
        {
            return Err(NumericsError::InvalidPermutation(perm.to_vec()));
        }
        let (shape, out) = kernels::permute(v.data(), v.shape(), perm);
        self.push(
            Op::Permute { x, perm: perm.to_vec() },
            Tensor::from_parts(shape, out),
            &[x],
        )
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId, NumericsError> {
        self.check_id(x)?;
        let r = self.value(x).rank();
        if r < 2 {
            return Err(NumericsError::InvalidAxis { axis: 1, rank: r });
        }
        let mut perm: Vec<usize> = (0..r).collect();
        perm.swap(r - 2, r - 1);
        self.permute(x, &perm)
    }

    /// `x @ w + b` with `w: [in, out]` and `b: [out]`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let h = self.matmul(x, w)?;
        self.add(h, b)
    }

    /// Mean cross-entropy of `[batch, classes]` logits against labels,
    /// composed as `mean(lse(logits) - sum(onehot * logits))`.
    pub fn cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId, NumericsError> {
        self.check_id(logits)?;
        let shape = self.value(logits).shape().to_vec();
        if shape.len() != 2 || shape[0] != labels.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "cross_entropy",
                lhs: shape,
                rhs: vec![labels.len()],
            });
        }
        let classes = shape[1];
        let mut onehot = vec![0.0; labels.len() * classes];
        for (i, &y) in labels.iter().enumerate() {
            if y >= classes {
                return Err(NumericsError::IndexOutOfRange { index: y, len: classes });
            }
            onehot[i * classes + y] = 1.0;
        }
        let onehot = self.constant(Tensor::from_parts(shape, onehot));
        let lse = self.log_sum_exp(logits, 1)?;
        let masked = self.mul(logits, onehot)?;
        let picked = self.sum_axis(masked, 1)?;
        let nll = self.sub(lse, picked)?;
        self.mean(nll)
    }

    /// Reverse sweep from a single-element `loss` node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, NumericsError> {
        self.check_id(loss)?;
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(NumericsError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }

        let mut by_node = BTreeMap::new();
        for (id, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if node.trainable {
                let data = grads[id].take().unwrap_or_else(|| vec![0.0; node.value.numel()]);
                by_node.insert(NodeId(id), Tensor::from_parts(node.value.shape().to_vec(), data));
            }
        }
        // Trainable leaves created after the loss cannot influence it.
        for (id, node) in self.nodes.iter().enumerate().skip(loss.0 + 1) {
            if node.trainable {
                by_node.insert(NodeId(id), Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { by_node })
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        fn slot(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut Vec<f64> {
            grads[id.0].get_or_insert_with(|| vec![0.0; len])
        }

        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let sa = va.shape();
                let sb = vb.shape();
                let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
                let n = sb[sb.len() - 1];
                let batch = va.numel() / (m * k);
                let shared = sb.len() == 2;
                if self.needs(*a) {
                    let ga = slot(grads, *a, va.numel());
                    for bi in 0..batch {
                        let bslice = if shared {
                            vb.data()
                        } else {
                            &vb.data()[bi * k * n..(bi + 1) * k * n]
                        };
                        gemm_nt(
                            &g[bi * m * n..(bi + 1) * m * n],
                            bslice,
                            &mut ga[bi * m * k..(bi + 1) * m * k],
                            m,
                            n,
                            k,
                        );
                    }
                }
                if self.needs(*b) {
                    let gb = slot(grads, *b, vb.numel());
                    if shared {
                        gemm_tn(va.data(), g, gb, batch * m, k, n);
                    } else {
                        for bi in 0..batch {
                            gemm_tn(
                                &va.data()[bi * m * k..(bi + 1) * m * k],
                                &g[bi * m * n..(bi + 1) * m * n],
                                &mut gb[bi * k * n..(bi + 1) * k * n],
                                m,
                                k,
                                n,
                            );
                        }
                    }
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if self.needs(*a) {
                    let ga = slot(grads, *a, g.len());
                    for (x, y) in ga.iter_mut().zip(g) {
                        *x += y;
                    }
                }
                if self.needs(*b) {
                    let rn = self.value(*b).numel();
                    let gb = slot(grads, *b, rn);
                    for (i, y) in g.iter().enumerate() {
                        gb[i % rn] += sign * y;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let rn = vb.len();
                if self.needs(*a) {
                    let ga = slot(grads, *a, g.len());
                    for (i, (x, y)) in ga.iter_mut().zip(g).enumerate() {
                        *x += y * vb[i % rn];
                    }
                }
                if self.needs(*b) {
                    let gb = slot(grads, *b, rn);
                    for (i, y) in g.iter().enumerate() {
                        gb[i % rn] += y * va[i];
                    }
                }
            }
            Op::BroadcastTo(x) => {
                let rn = self.value(*x).numel();
                let gx = slot(grads, *x, rn);
                for (i, y) in g.iter().enumerate() {
                    gx[i % rn] += y;
                }
            }
            Op::Relu(x) => {
                let vx = self.value(*x).data();
                let gx = slot(grads, *x, g.len());
                for ((o, y), a) in gx.iter_mut().zip(g).zip(vx) {
                    if *a > 0.0 {
                        *o += y;
                    }
                }
            }
            Op::Gelu(x) => {
                let vx = self.value(*x).data();
                #[cfg(test)]
                let broken = fault::BROKEN_GELU_BACKWARD.with(|c| c.get());
                #[cfg(not(test))]
                let broken = false;
                let gx = slot(grads, *x, g.len());
                for ((o, y), a) in gx.iter_mut().zip(g).zip(vx) {
                    let d = if broken {
                        kernels::sigmoid(*a)
                    } else {
                        kernels::gelu_derivative(*a)
                    };
                    *o += y * d;
                }
            }
            Op::Sigmoid(x) => {
                let out = node.value.data();
                let gx = slot(grads, *x, g.len());
                for ((o, y), s) in gx.iter_mut().zip(g).zip(out) {
                    *o += y * s * (1.0 - s);
                }
            }
            Op::Log(x) => {
                let vx = self.value(*x).data();
                let gx = slot(grads, *x, g.len());
                for ((o, y), a) in gx.iter_mut().zip(g).zip(vx) {
                    *o += y / a;
                }
            }
            Op::Softmax { x, axis } => {
                let s = node.value.data();
                let (outer, len, inner) = axis_extents(node.value.shape(), *axis);
                let gx = slot(grads, *x, g.len());
                for o in 0..outer {
                    for i in 0..inner {
                        let base = o * len * inner + i;
                        let dotp: f64 = (0..len).map(|a| g[base + a * inner] * s[base + a * inner]).sum();
                        for a in 0..len {
                            let j = base + a * inner;
                            gx[j] += s[j] * (g[j] - dotp);
                        }
                    }
                }
            }
            Op::LogSumExp { x, axis } => {
                let vx = self.value(*x);
                let (outer, len, inner) = axis_extents(vx.shape(), *axis);
                let lse = node.value.data();
                let d = vx.data();
                let gx = slot(grads, *x, vx.numel());
                for o in 0..outer {
                    for i in 0..inner {
                        let r = o * inner + i;
                        for a in 0..len {
                            let j = o * len * inner + a * inner + i;
                            gx[j] += g[r] * (d[j] - lse[r]).exp();
                        }
                    }
                }
            }
            Op::LayerNorm { x, xhat, rstd } => {
                let d = *node.value.shape().last().expect("rank >= 1");
                let gx = slot(grads, *x, g.len());
                for (r, &rs) in rstd.iter().enumerate() {
                    let gr = &g[r * d..(r + 1) * d];
                    let xr = &xhat[r * d..(r + 1) * d];
                    let mean_g = gr.iter().sum::<f64>() / d as f64;
                    let mean_gx = gr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                    for ((o, gv), xv) in gx[r * d..(r + 1) * d].iter_mut().zip(gr).zip(xr) {
                        *o += rs * (gv - mean_g - xv * mean_gx);
                    }
                }
            }
            Op::Dropout { x, mask } => {
                let gx = slot(grads, *x, g.len());
                for ((o, y), m) in gx.iter_mut().zip(g).zip(mask) {
                    *o += y * m;
                }
            }
            Op::Embedding { table, indices } => {
                let vt = self.value(*table);
                let dim = vt.shape()[1];
                let gt = slot(grads, *table, vt.numel());
                for (row, &i) in indices.iter().enumerate() {
                    for (o, y) in gt[i * dim..(i + 1) * dim]
                        .iter_mut()
                        .zip(&g[row * dim..(row + 1) * dim])
                    {
                        *o += y;
                    }
                }
            }
            Op::Sum(x) | Op::Mean(x) => {
                let n = self.value(*x).numel();
                let scale = if matches!(node.op, Op::Mean(_)) {
                    1.0 / n as f64
                } else {
                    1.0
                };
                let gx = slot(grads, *x, n);
                for o in gx.iter_mut() {
                    *o += g[0] * scale;
                }
            }
            Op::SumAxis { x, axis } | Op::MeanAxis { x, axis } => {
                let vx = self.value(*x);
                let (outer, len, inner) = axis_extents(vx.shape(), *axis);
                let scale = if matches!(node.op, Op::MeanAxis { .. }) {
                    1.0 / len as f64
                } else {
                    1.0
                };
                let gx = slot(grads, *x, vx.numel());
                for o in 0..outer {
                    let src = &g[o * inner..(o + 1) * inner];
                    for a in 0..len {
                        let dst = &mut gx[(o * len + a) * inner..(o * len + a + 1) * inner];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += s * scale;
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                let gx = slot(grads, *x, g.len());
                for (o, y) in gx.iter_mut().zip(g) {
                    *o += y;
                }
            }
            Op::Permute { x, perm } => {
                let mut inverse = vec![0; perm.len()];
                for (i, &p) in perm.iter().enumerate() {
                    inverse[p] = i;
                }
                let (_, back) = kernels::permute(g, node.value.shape(), &inverse);
                let gx = slot(grads, *x, g.len());
                for (o, y) in gx.iter_mut().zip(&back) {
                    *o += y;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn sum_of_parameter_has_unit_gradient() {
        let mut g = Graph::new();
        let w = g.parameter(t(&[3], &[0.5, -1.0, 2.0]));
        let loss = g.sum(w).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_gradient() {
        let mut g = Graph::new();
        let w = g.parameter(t(&[2], &[1.0, 2.0]));
        let sq = g.mul(w, w).unwrap();
        let loss = g.sum(sq).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let w = g.parameter(t(&[2], &[1.0, 2.0]));
        let c = g.constant(t(&[2], &[3.0, 4.0]));
        let p = g.mul(w, c).unwrap();
        let loss = g.sum(p).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[3.0, 4.0]);
        assert!(grads.get(c).is_none());
        assert_eq!(grads.len(), 1);
    }

    #[test]
    fn fan_out_accumulates() {
        // loss = sum(w) + sum(3 w) has gradient 4 everywhere.
        let mut g = Graph::new();
        let w = g.parameter(t(&[2], &[1.0, -1.0]));
        let a = g.sum(w).unwrap();
        let s = g.scale(w, 3.0).unwrap();
        let b = g.sum(s).unwrap();
        let loss = g.add(a, b).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[4.0, 4.0]);
    }

    #[test]
    fn unreached_parameter_gets_zero_gradient() {
        let mut g = Graph::new();
        let w = g.parameter(t(&[2], &[1.0, 2.0]));
        let unused = g.parameter(t(&[3], &[1.0, 2.0, 3.0]));
        let loss = g.sum(w).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(unused).unwrap().data(), &[0.0; 3]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let w = g.parameter(t(&[2], &[1.0, 2.0]));
        assert!(matches!(g.backward(w), Err(NumericsError::NonScalarLoss(_))));
    }

    #[test]
    fn broadcasting_rules() {
        let mut g = Graph::new();
        let x = g.constant(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let b = g.parameter(t(&[3], &[10.0, 20.0, 30.0]));
        let y = g.add(b, x).unwrap();
        assert_eq!(g.value(y).data(), &[11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
        let bad = g.constant(t(&[2], &[1.0, 1.0]));
        assert!(matches!(g.add(x, bad), Err(NumericsError::ShapeMismatch { .. })));
        let loss = g.sum(y).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(b).unwrap().data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn dropout_zero_probability_is_identity() {
        let mut g = Graph::new();
        let x = g.constant(t(&[3], &[1.0, 2.0, 3.0]));
        let mut rng = SeededRng::new(0);
        let y = g.dropout(x, 0.0, &mut rng).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn dropout_uses_inverted_scaling() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[10_000], 1.0));
        let mut rng = SeededRng::new(1);
        let y = g.dropout(x, 0.25, &mut rng).unwrap();
        let v = g.value(y).data();
        assert!(v.iter().all(|&a| a == 0.0 || (a - 4.0 / 3.0).abs() < 1e-15));
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean - 1.0).abs() < 0.03, "{mean}");
    }

    #[test]
    fn matmul_with_batched_rhs() {
        let mut g = Graph::new();
        let a = g.constant(t(&[2, 1, 2], &[1.0, 2.0, 3.0, 4.0]));
        let b = g.constant(t(&[2, 2, 1], &[1.0, 1.0, 2.0, 0.0]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).shape(), &[2, 1, 1]);
        assert_eq!(g.value(c).data(), &[3.0, 6.0]);
    }

    #[test]
    fn log_of_zero_is_reported() {
        let mut g = Graph::new();
        let x = g.constant(t(&[2], &[1.0, 0.0]));
        assert!(matches!(g.log(x), Err(NumericsError::NonFinite { index: 1 })));
    }

    #[test]
    fn cross_entropy_of_uniform_logits() {
        let mut g = Graph::new();
        let l = g.parameter(Tensor::zeros(&[2, 4]));
        let loss = g.cross_entropy(l, &[0, 3]).unwrap();
        assert!((g.value(loss).data()[0] - 4f64.ln()).abs() < 1e-15);
        let grads = g.backward(loss).unwrap();
        let gl = grads.get(l).unwrap().data();
        assert!((gl[0] - (0.25 - 1.0) / 2.0).abs() < 1e-15);
        assert!((gl[1] - 0.125).abs() < 1e-15);
    }
}
