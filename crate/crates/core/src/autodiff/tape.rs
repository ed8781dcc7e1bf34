//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation as a node in creation order, which is
//! already a topological order, so [`Tape::backward`] is a single reverse sweep.
//! Parameters enter the tape as borrowed leaves; their gradients are read back
//! with [`Tape::grad`] after the sweep.

use std::borrow::Cow;

use rand::Rng;

use super::matrix::{matmul_nt_acc, matmul_tn_acc, Matrix};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elemwise {
    Add,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddScalar(NodeId, NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softmax(NodeId),
    NegLog(NodeId, usize),
    SoftmaxCrossEntropy { logits: NodeId, gold: usize, probs: Matrix },
    Mask(NodeId, Matrix),
    SliceRows(NodeId, usize),
    GatherRow(NodeId, usize),
    HStack(Vec<NodeId>),
    Transpose(NodeId),
    Sum(Vec<NodeId>),
}

struct Node<'a> {
    value: Cow<'a, Matrix>,
    op: Op,
}

/// One computation graph. Not shareable across threads; build one per
/// forward pass.
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    grads: Vec<Option<Matrix>>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::with_capacity(256),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Matrix>, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Differentiable leaf that borrows its value.
    pub fn param(&mut self, value: &'a Matrix) -> NodeId {
        self.push(Cow::Borrowed(value), Op::Leaf)
    }

    /// Differentiable leaf that owns its value.
    pub fn var(&mut self, value: Matrix) -> NodeId {
        self.push(Cow::Owned(value), Op::Leaf)
    }

    /// Value that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(Cow::Owned(value), Op::Constant)
    }

    /// Copy of `x` with the gradient path cut.
    pub fn detach(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).clone();
        self.constant(v)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id).data()[0]
    }

    /// Accumulated gradient of `id`, if [`Tape::backward`] reached it.
    pub fn grad(&self, id: NodeId) -> Option<&Matrix> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::Dimension(format!("{what}: {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Cow::Owned(out), Op::MatMul(a, b)))
    }

    pub fn elemwise(&mut self, a: NodeId, b: NodeId, kind: Elemwise) -> Result<NodeId> {
        self.same_shape(a, b, "elementwise")?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = match kind {
            Elemwise::Add => va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect(),
            Elemwise::Mul => va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect(),
        };
        let out = Matrix::from_vec(va.rows(), va.cols(), data)?;
        let op = match kind {
            Elemwise::Add => Op::Add(a, b),
            Elemwise::Mul => Op::Mul(a, b),
        };
        Ok(self.push(Cow::Owned(out), op))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elemwise(a, b, Elemwise::Add)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elemwise(a, b, Elemwise::Mul)
    }

    /// `a + s` with the 1x1 node `s` broadcast over every entry.
    pub fn add_scalar(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        if self.value(s).shape() != (1, 1) {
            return Err(Error::Dimension("add_scalar expects a 1x1 operand".into()));
        }
        let sv = self.scalar(s);
        let va = self.value(a);
        let data = va.data().iter().map(|x| x + sv).collect();
        let out = Matrix::from_vec(va.rows(), va.cols(), data)?;
        Ok(self.push(Cow::Owned(out), Op::AddScalar(a, s)))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let mut out = self.value(a).clone();
        out.scale(factor);
        self.push(Cow::Owned(out), Op::Scale(a, factor))
    }

    pub fn activation(&mut self, x: NodeId, kind: Activation) -> NodeId {
        let mut out = self.value(x).clone();
        match kind {
            Activation::Tanh => out.data_mut().iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Sigmoid => out.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v)),
        }
        let op = match kind {
            Activation::Tanh => Op::Tanh(x),
            Activation::Sigmoid => Op::Sigmoid(x),
        };
        self.push(Cow::Owned(out), op)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.activation(x, Activation::Tanh)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.activation(x, Activation::Sigmoid)
    }

    /// Softmax over all entries of `x`.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x);
        if v.is_empty() {
            return Err(Error::Empty("softmax over no entries".into()));
        }
        let probs = softmax_values(v);
        Ok(self.push(Cow::Owned(probs), Op::Softmax(x)))
    }

    /// `-ln dist[gold]` for a distribution node.
    pub fn cross_entropy(&mut self, dist: NodeId, gold: usize) -> Result<NodeId> {
        let v = self.value(dist);
        if gold >= v.len() {
            return Err(Error::Index(format!(
                "gold label {gold} out of range for {} classes",
                v.len()
            )));
        }
        let loss = -v.data()[gold].ln();
        Ok(self.push(Cow::Owned(Matrix::scalar(loss)), Op::NegLog(dist, gold)))
    }

    /// Fused softmax + cross-entropy on raw logits. The gradient reaching the
    /// logits is `softmax(logits) - onehot(gold)`.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, gold: usize) -> Result<NodeId> {
        let v = self.value(logits);
        if v.is_empty() {
            return Err(Error::Empty("cross-entropy over no classes".into()));
        }
        if gold >= v.len() {
            return Err(Error::Index(format!(
                "gold label {gold} out of range for {} classes",
                v.len()
            )));
        }
        let max = v.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + v.data().iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let loss = log_z - v.data()[gold];
        let probs = softmax_values(v);
        Ok(self.push(
            Cow::Owned(Matrix::scalar(loss)),
            Op::SoftmaxCrossEntropy {
                logits,
                gold,
                probs,
            },
        ))
    }

    /// Inverted dropout. Identity when not training or when `keep_prob == 1`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: NodeId,
        keep_prob: f64,
        rng: &mut R,
        training: bool,
    ) -> Result<NodeId> {
        if !(keep_prob > 0.0 && keep_prob <= 1.0) {
            return Err(Error::Config(format!(
                "keep probability {keep_prob} outside (0, 1]"
            )));
        }
        if !training || keep_prob == 1.0 {
            return Ok(x);
        }
        let v = self.value(x);
        let scale = 1.0 / keep_prob;
        let mask_data: Vec<f64> = (0..v.len())
            .map(|_| if rng.gen::<f64>() < keep_prob { scale } else { 0.0 })
            .collect();
        let mask = Matrix::from_vec(v.rows(), v.cols(), mask_data)?;
        let out_data = v.data().iter().zip(mask.data()).map(|(a, m)| a * m).collect();
        let out = Matrix::from_vec(v.rows(), v.cols(), out_data)?;
        Ok(self.push(Cow::Owned(out), Op::Mask(x, mask)))
    }

    /// Rows `start..start+len` of `x`.
    pub fn slice_rows(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let v = self.value(x);
        if start + len > v.rows() {
            return Err(Error::Dimension(format!(
                "row slice {start}..{} of {} rows",
                start + len,
                v.rows()
            )));
        }
        let cols = v.cols();
        let out = Matrix::from_vec(len, cols, v.data()[start * cols..(start + len) * cols].to_vec())?;
        Ok(self.push(Cow::Owned(out), Op::SliceRows(x, start)))
    }

    /// Row `row` of `table`, returned as a column vector.
    pub fn gather_row(&mut self, table: NodeId, row: usize) -> Result<NodeId> {
        let v = self.value(table);
        if row >= v.rows() {
            return Err(Error::Index(format!("row {row} of {} rows", v.rows())));
        }
        let out = Matrix::column(v.row(row));
        Ok(self.push(Cow::Owned(out), Op::GatherRow(table, row)))
    }

    /// Place column vectors side by side into a `d x n` matrix.
    pub fn hstack(&mut self, columns: &[NodeId]) -> Result<NodeId> {
        let first = columns
            .first()
            .ok_or_else(|| Error::Empty("hstack of no columns".into()))?;
        let d = self.value(*first).rows();
        let n = columns.len();
        let mut out = Matrix::zeros(d, n);
        for (j, c) in columns.iter().enumerate() {
            let v = self.value(*c);
            if v.shape() != (d, 1) {
                return Err(Error::Dimension(format!(
                    "hstack expects {d}x1 columns, got {:?}",
                    v.shape()
                )));
            }
            for (i, x) in v.data().iter().enumerate() {
                out.set(i, j, *x);
            }
        }
        Ok(self.push(Cow::Owned(out), Op::HStack(columns.to_vec())))
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        let out = self.value(x).transpose();
        self.push(Cow::Owned(out), Op::Transpose(x))
    }

    /// Sum of same-shaped nodes.
    pub fn sum(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let first = xs
            .first()
            .ok_or_else(|| Error::Empty("sum of no terms".into()))?;
        let mut out = self.value(*first).clone();
        for x in &xs[1..] {
            self.same_shape(*first, *x, "sum")?;
            out.add_assign(self.value(*x));
        }
        Ok(self.push(Cow::Owned(out), Op::Sum(xs.to_vec())))
    }

    /// Propagate d(loss)/d(node) to every ancestor of the scalar `loss`.
    /// Gradients accumulate across calls.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Dimension(format!(
                "backward needs a scalar loss, got {:?}",
                self.value(loss).shape()
            )));
        }
        let n = loss.0 + 1;
        let mut local: Vec<Option<Matrix>> = Vec::with_capacity(n);
        local.resize_with(n, || None);
        local[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..n).rev() {
            let Some(g) = local[i].take() else { continue };
            self.propagate(i, &g, &mut local);
            if self.grads.len() < self.nodes.len() {
                self.grads.resize_with(self.nodes.len(), || None);
            }
            match &mut self.grads[i] {
                Some(acc) => acc.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Matrix, local: &mut [Option<Matrix>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.needs_grad(*a) {
                    let ga = slot(local, *a, va);
                    matmul_nt_acc(g, vb, ga);
                }
                if self.needs_grad(*b) {
                    let gb = slot(local, *b, vb);
                    matmul_tn_acc(va, g, gb);
                }
            }
            Op::Add(a, b) => {
                for x in [*a, *b] {
                    if self.needs_grad(x) {
                        slot(local, x, self.value(x)).add_assign(g);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (a, b) = (*a, *b);
                if self.needs_grad(a) {
                    let vb = self.value(b);
                    let ga = slot(local, a, self.value(a));
                    for ((o, gv), bv) in ga.data_mut().iter_mut().zip(g.data()).zip(vb.data()) {
                        *o += gv * bv;
                    }
                }
                if self.needs_grad(b) {
                    let va = self.value(a);
                    let gb = slot(local, b, self.value(b));
                    for ((o, gv), av) in gb.data_mut().iter_mut().zip(g.data()).zip(va.data()) {
                        *o += gv * av;
                    }
                }
            }
            Op::AddScalar(a, s) => {
                if self.needs_grad(*a) {
                    slot(local, *a, self.value(*a)).add_assign(g);
                }
                if self.needs_grad(*s) {
                    slot(local, *s, self.value(*s)).data_mut()[0] += g.sum();
                }
            }
            Op::Scale(a, f) => {
                if self.needs_grad(*a) {
                    let ga = slot(local, *a, self.value(*a));
                    for (o, gv) in ga.data_mut().iter_mut().zip(g.data()) {
                        *o += gv * f;
                    }
                }
            }
            Op::Tanh(x) => {
                if self.needs_grad(*x) {
                    let gx = slot(local, *x, self.value(*x));
                    for ((o, gv), y) in gx.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                        *o += gv * (1.0 - y * y);
                    }
                }
            }
            Op::Sigmoid(x) => {
                if self.needs_grad(*x) {
                    let gx = slot(local, *x, self.value(*x));
                    for ((o, gv), y) in gx.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                        *o += gv * y * (1.0 - y);
                    }
                }
            }
            Op::Softmax(x) => {
                if self.needs_grad(*x) {
                    let dot: f64 = g.data().iter().zip(out.data()).map(|(a, b)| a * b).sum();
                    let gx = slot(local, *x, self.value(*x));
                    for ((o, gv), y) in gx.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                        *o += y * (gv - dot);
                    }
                }
            }
            Op::NegLog(x, gold) => {
                if self.needs_grad(*x) {
                    let p = self.value(*x).data()[*gold];
                    let gx = slot(local, *x, self.value(*x));
                    gx.data_mut()[*gold] -= g.data()[0] / p;
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                gold,
                probs,
            } => {
                if self.needs_grad(*logits) {
                    let scale = g.data()[0];
                    let gx = slot(local, *logits, self.value(*logits));
                    for (k, (o, p)) in gx.data_mut().iter_mut().zip(probs.data()).enumerate() {
                        let target = if k == *gold { 1.0 } else { 0.0 };
                        *o += scale * (p - target);
                    }
                }
            }
            Op::Mask(x, mask) => {
                if self.needs_grad(*x) {
                    let gx = slot(local, *x, self.value(*x));
                    for ((o, gv), m) in gx.data_mut().iter_mut().zip(g.data()).zip(mask.data()) {
                        *o += gv * m;
                    }
                }
            }
            Op::SliceRows(x, start) => {
                if self.needs_grad(*x) {
                    let cols = g.cols();
                    let gx = slot(local, *x, self.value(*x));
                    let dst = &mut gx.data_mut()[start * cols..start * cols + g.len()];
                    for (o, gv) in dst.iter_mut().zip(g.data()) {
                        *o += gv;
                    }
                }
            }
            Op::GatherRow(table, row) => {
                if self.needs_grad(*table) {
                    let gt = slot(local, *table, self.value(*table));
                    for (o, gv) in gt.row_mut(*row).iter_mut().zip(g.data()) {
                        *o += gv;
                    }
                }
            }
            Op::HStack(cols) => {
                for (j, c) in cols.iter().enumerate() {
                    if self.needs_grad(*c) {
                        let gc = slot(local, *c, self.value(*c));
                        for (r, o) in gc.data_mut().iter_mut().enumerate() {
                            *o += g.get(r, j);
                        }
                    }
                }
            }
            Op::Transpose(x) => {
                if self.needs_grad(*x) {
                    let gt = g.transpose();
                    slot(local, *x, self.value(*x)).add_assign(&gt);
                }
            }
            Op::Sum(xs) => {
                for x in xs {
                    if self.needs_grad(*x) {
                        slot(local, *x, self.value(*x)).add_assign(g);
                    }
                }
            }
        }
    }

    #[inline]
    fn needs_grad(&self, id: NodeId) -> bool {
        !matches!(self.nodes[id.0].op, Op::Constant)
    }
}

fn slot<'m>(local: &'m mut [Option<Matrix>], id: NodeId, like: &Matrix) -> &'m mut Matrix {
    local[id.0].get_or_insert_with(|| Matrix::zeros(like.rows(), like.cols()))
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted softmax over all entries, same shape as the input.
pub fn softmax_values(v: &Matrix) -> Matrix {
    let max = v.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.data().iter().map(|x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let data = exps.into_iter().map(|e| e / z).collect();
    Matrix::from_vec(v.rows(), v.cols(), data).expect("same shape")
}
