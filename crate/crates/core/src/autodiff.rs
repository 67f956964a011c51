//! Define-by-run reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is an append-only list of nodes. Every builder method
//! evaluates its node immediately, so node order is a topological order and
//! [`Graph::forward`] can replay the whole computation after leaf values
//! change. Gradients are only defined for scalar roots.
//!
//! ```
//! use addm_core::autodiff::Graph;
//! use addm_core::Tensor;
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::scalar(3.0));
//! let y = g.square(x).unwrap();
//! assert_eq!(g.value(y).item(), 9.0);
//! let grads = g.backward(y).unwrap();
//! assert_eq!(grads.get(x).unwrap().item(), 6.0);
//! ```

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::{dot, Tensor};

/// Lower bound applied inside `log` so that zero densities give a finite loss.
pub const LOG_GUARD: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf { trainable: bool },
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Offset(NodeId, f64),
    Cos(NodeId),
    Relu(NodeId),
    Square(NodeId),
    Log(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    RowSum(NodeId),
    Softmax(NodeId),
    Concat(Vec<NodeId>),
    Dot(NodeId, NodeId),
    SquaredNorm(NodeId),
    L2Norm(NodeId),
    CosineSimilarity(NodeId, NodeId),
    NormalizeRows(NodeId),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf { .. } => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::Cos(..) => "cos",
            Op::Relu(..) => "relu",
            Op::Square(..) => "square",
            Op::Log(..) => "log",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::RowSum(..) => "row_sum",
            Op::Softmax(..) => "softmax",
            Op::Concat(..) => "concat",
            Op::Dot(..) => "dot",
            Op::SquaredNorm(..) => "squared_norm",
            Op::L2Norm(..) => "l2_norm",
            Op::CosineSimilarity(..) => "cosine_similarity",
            Op::NormalizeRows(..) => "normalize_rows",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Gradients of a scalar root with respect to every trainable leaf.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    by_leaf: HashMap<NodeId, Tensor>,
}

impl Gradients {
    pub fn get(&self, leaf: NodeId) -> Option<&Tensor> {
        self.by_leaf.get(&leaf)
    }

    pub fn len(&self) -> usize {
        self.by_leaf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_leaf.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &Tensor)> {
        self.by_leaf.iter()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
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

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(value, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Tensor, trainable: bool) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf { trainable },
            value,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn op_name(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.name()
    }

    pub fn is_trainable(&self, id: NodeId) -> bool {
        matches!(self.nodes[id.0].op, Op::Leaf { trainable: true })
    }

    /// Replaces a leaf value. Dependent nodes are stale until [`Graph::forward`].
    pub fn set_value(&mut self, leaf: NodeId, value: Tensor) -> Result<()> {
        let node = &mut self.nodes[leaf.0];
        if !matches!(node.op, Op::Leaf { .. }) {
            return Err(Error::invalid(format!("node {} is not a leaf", leaf.0)));
        }
        node.value.expect_same_shape(&value, "set_value")?;
        node.value = value;
        Ok(())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Transpose(a))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add(a, b))
    }

    /// Adds vector `b` of length n to every row of the `[m, n]` matrix `a`.
    pub fn add_row(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::AddRow(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        self.push(Op::Scale(a, factor))
    }

    pub fn offset(&mut self, a: NodeId, shift: f64) -> Result<NodeId> {
        self.push(Op::Offset(a, shift))
    }

    pub fn cos(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Cos(a))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Relu(a))
    }

    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Square(a))
    }

    /// Elementwise `ln(max(x, LOG_GUARD))`.
    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Log(a))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Mean(a))
    }

    /// `[m, n] -> [m]`.
    pub fn row_sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::RowSum(a))
    }

    /// Softmax of a vector.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Softmax(a))
    }

    /// Column-wise concatenation. Vector inputs count as single columns.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.push(Op::Concat(parts.to_vec()))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Dot(a, b))
    }

    pub fn squared_norm(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::SquaredNorm(a))
    }

    pub fn l2_norm(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::L2Norm(a))
    }

    /// Cosine similarity of two vectors, or row-wise for two `[m, n]` matrices.
    /// A zero-norm operand yields 0.
    pub fn cosine_similarity(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::CosineSimilarity(a, b))
    }

    /// Scales a vector, or every row of a matrix, to unit Euclidean norm.
    pub fn normalize_rows(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::NormalizeRows(a))
    }

    fn push(&mut self, op: Op) -> Result<NodeId> {
        let id = self.nodes.len();
        let value = self.eval(&op)?;
        if !value.all_finite() {
            return Err(Error::NonFinite {
                node: id,
                op: op.name(),
            });
        }
        self.nodes.push(Node { op, value });
        Ok(NodeId(id))
    }

    /// Re-evaluates every node up to `root` from the current leaf values.
    pub fn forward(&mut self, root: NodeId) -> Result<&Tensor> {
        for i in 0..=root.0 {
            if matches!(self.nodes[i].op, Op::Leaf { .. }) {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let value = self.eval(&op)?;
            if !value.all_finite() {
                return Err(Error::NonFinite {
                    node: i,
                    op: op.name(),
                });
            }
            self.nodes[i].value = value;
        }
        Ok(&self.nodes[root.0].value)
    }

    fn eval(&self, op: &Op) -> Result<Tensor> {
        let v = |id: &NodeId| &self.nodes[id.0].value;
        let name = op.name();
        Ok(match op {
            Op::Leaf { .. } => unreachable!("leaves are not evaluated"),
            Op::MatMul(a, b) => v(a).matmul(v(b))?,
            Op::Transpose(a) => v(a).transpose()?,
            Op::Add(a, b) => v(a).zip_map(v(b), name, |x, y| x + y)?,
            Op::Sub(a, b) => v(a).zip_map(v(b), name, |x, y| x - y)?,
            Op::Mul(a, b) => v(a).zip_map(v(b), name, |x, y| x * y)?,
            Op::AddRow(a, b) => {
                let (a, b) = (v(a), v(b));
                let (_, n) = a.expect_matrix(name)?;
                if b.shape() != [n] {
                    return Err(Error::ShapeMismatch {
                        op: name,
                        left: a.shape().to_vec(),
                        right: b.shape().to_vec(),
                    });
                }
                let mut out = a.clone();
                for (i, x) in out.data_mut().iter_mut().enumerate() {
                    *x += b.data()[i % n];
                }
                out
            }
            Op::Scale(a, c) => v(a).map(|x| x * c),
            Op::Offset(a, c) => v(a).map(|x| x + c),
            Op::Cos(a) => v(a).map(f64::cos),
            Op::Relu(a) => v(a).map(|x| x.max(0.0)),
            Op::Square(a) => v(a).map(|x| x * x),
            Op::Log(a) => v(a).map(|x| x.max(LOG_GUARD).ln()),
            Op::Sum(a) => Tensor::scalar(v(a).sum()),
            Op::Mean(a) => {
                let a = v(a);
                if a.is_empty() {
                    return Err(Error::Empty("mean of empty tensor"));
                }
                Tensor::scalar(a.sum() / a.len() as f64)
            }
            Op::RowSum(a) => {
                let a = v(a);
                let (m, _) = a.expect_matrix(name)?;
                Tensor::vector((0..m).map(|i| a.row(i).iter().sum()).collect())
            }
            Op::Softmax(a) => {
                let a = v(a);
                if a.rank() != 1 || a.is_empty() {
                    return Err(Error::ShapeMismatch {
                        op: name,
                        left: a.shape().to_vec(),
                        right: vec![0],
                    });
                }
                Tensor::vector(softmax(a.data()))
            }
            Op::Concat(parts) => {
                let first = parts.first().ok_or(Error::Empty("concat of no tensors"))?;
                let m = v(first).rows();
                let mut widths = Vec::with_capacity(parts.len());
                for p in parts {
                    let t = v(p);
                    if t.rank() == 0 || t.rows() != m {
                        return Err(Error::ShapeMismatch {
                            op: name,
                            left: v(first).shape().to_vec(),
                            right: t.shape().to_vec(),
                        });
                    }
                    widths.push(t.cols());
                }
                let total: usize = widths.iter().sum();
                let mut out = Vec::with_capacity(m * total);
                for i in 0..m {
                    for p in parts {
                        out.extend_from_slice(v(p).row(i));
                    }
                }
                Tensor::matrix(m, total, out)?
            }
            Op::Dot(a, b) => {
                let (a, b) = (v(a), v(b));
                if a.rank() != 1 {
                    return Err(Error::ShapeMismatch {
                        op: name,
                        left: a.shape().to_vec(),
                        right: b.shape().to_vec(),
                    });
                }
                a.expect_same_shape(b, name)?;
                Tensor::scalar(dot(a.data(), b.data()))
            }
            Op::SquaredNorm(a) => Tensor::scalar(v(a).squared_norm()),
            Op::L2Norm(a) => Tensor::scalar(v(a).squared_norm().sqrt()),
            Op::CosineSimilarity(a, b) => {
                let (a, b) = (v(a), v(b));
                a.expect_same_shape(b, name)?;
                let sims: Vec<f64> = (0..row_count(a))
                    .map(|i| cosine(row_of(a, i), row_of(b, i)))
                    .collect();
                if a.rank() == 2 {
                    Tensor::vector(sims)
                } else {
                    Tensor::scalar(sims[0])
                }
            }
            Op::NormalizeRows(a) => {
                let a = v(a);
                let mut out = a.clone();
                for i in 0..row_count(a) {
                    let row = row_of_mut(&mut out, i);
                    let n = crate::tensor::norm(row);
                    row.iter_mut().for_each(|x| *x /= n);
                }
                out
            }
        })
    }

    /// Reverse sweep from a scalar `root`.
    ///
    /// Uses the values from the most recent evaluation. Every trainable leaf
    /// that precedes `root` receives an entry; leaves the root does not depend
    /// on receive zeros.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        let root_value = &self.nodes[root.0].value;
        if !root_value.is_scalar() {
            return Err(Error::NonScalarRoot(root_value.shape().to_vec()));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        adj[root.0] = Some(Tensor::full(root_value.shape(), 1.0));

        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            let val = |id: &NodeId| &self.nodes[id.0].value;
            match &node.op {
                Op::Leaf { .. } => {
                    adj[i] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (val(a), val(b));
                    if bv.rank() == 2 {
                        accumulate(&mut adj, *a, g.matmul_transposed(bv)?);
                        accumulate(&mut adj, *b, av.transpose()?.matmul(&g)?);
                    } else {
                        let (m, k) = (av.rows(), av.cols());
                        let mut da = vec![0.0; m * k];
                        for r in 0..m {
                            for c in 0..k {
                                da[r * k + c] = g.data()[r] * bv.data()[c];
                            }
                        }
                        accumulate(&mut adj, *a, Tensor::matrix(m, k, da)?);
                        accumulate(&mut adj, *b, av.transpose()?.matmul(&g)?);
                    }
                }
                Op::Transpose(a) => accumulate(&mut adj, *a, g.transpose()?),
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone());
                    accumulate(&mut adj, *b, g);
                }
                Op::AddRow(a, b) => {
                    let n = g.cols();
                    let mut db = vec![0.0; n];
                    for (j, x) in g.data().iter().enumerate() {
                        db[j % n] += x;
                    }
                    accumulate(&mut adj, *b, Tensor::vector(db));
                    accumulate(&mut adj, *a, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *b, g.map(|x| -x));
                    accumulate(&mut adj, *a, g);
                }
                Op::Mul(a, b) => {
                    accumulate(&mut adj, *a, g.zip_map(val(b), "mul", |x, y| x * y)?);
                    accumulate(&mut adj, *b, g.zip_map(val(a), "mul", |x, y| x * y)?);
                }
                Op::Scale(a, c) => accumulate(&mut adj, *a, g.map(|x| x * c)),
                Op::Offset(a, _) => accumulate(&mut adj, *a, g),
                Op::Cos(a) => {
                    accumulate(&mut adj, *a, g.zip_map(val(a), "cos", |x, y| -x * y.sin())?)
                }
                Op::Relu(a) => accumulate(
                    &mut adj,
                    *a,
                    g.zip_map(val(a), "relu", |x, y| if y > 0.0 { x } else { 0.0 })?,
                ),
                Op::Square(a) => accumulate(
                    &mut adj,
                    *a,
                    g.zip_map(val(a), "square", |x, y| 2.0 * x * y)?,
                ),
                Op::Log(a) => accumulate(
                    &mut adj,
                    *a,
                    g.zip_map(
                        val(a),
                        "log",
                        |x, y| if y > LOG_GUARD { x / y } else { 0.0 },
                    )?,
                ),
                Op::Sum(a) => accumulate(&mut adj, *a, Tensor::full(val(a).shape(), g.item())),
                Op::Mean(a) => {
                    let n = val(a).len() as f64;
                    accumulate(&mut adj, *a, Tensor::full(val(a).shape(), g.item() / n));
                }
                Op::RowSum(a) => {
                    let av = val(a);
                    let n = av.cols();
                    let data = (0..av.len()).map(|j| g.data()[j / n]).collect();
                    accumulate(&mut adj, *a, Tensor::new(av.shape().to_vec(), data)?);
                }
                Op::Softmax(a) => {
                    let s = node.value.data();
                    let gs = dot(g.data(), s);
                    let data = s
                        .iter()
                        .zip(g.data())
                        .map(|(si, gi)| si * (gi - gs))
                        .collect();
                    accumulate(&mut adj, *a, Tensor::vector(data));
                }
                Op::Concat(parts) => {
                    let m = node.value.rows();
                    let total = node.value.cols();
                    let mut offset = 0;
                    for p in parts {
                        let pv = val(p);
                        let w = pv.cols();
                        let mut data = Vec::with_capacity(m * w);
                        for r in 0..m {
                            data.extend_from_slice(
                                &g.data()[r * total + offset..r * total + offset + w],
                            );
                        }
                        accumulate(&mut adj, *p, Tensor::new(pv.shape().to_vec(), data)?);
                        offset += w;
                    }
                }
                Op::Dot(a, b) => {
                    let s = g.item();
                    accumulate(&mut adj, *a, val(b).map(|x| x * s));
                    accumulate(&mut adj, *b, val(a).map(|x| x * s));
                }
                Op::SquaredNorm(a) => {
                    let s = g.item();
                    accumulate(&mut adj, *a, val(a).map(|x| 2.0 * x * s));
                }
                Op::L2Norm(a) => {
                    let n = node.value.item();
                    let s = if n > 0.0 { g.item() / n } else { 0.0 };
                    accumulate(&mut adj, *a, val(a).map(|x| x * s));
                }
                Op::CosineSimilarity(a, b) => {
                    let (av, bv) = (val(a), val(b));
                    let mut da = Tensor::zeros(av.shape());
                    let mut db = Tensor::zeros(bv.shape());
                    for r in 0..row_count(av) {
                        let (x, y) = (row_of(av, r), row_of(bv, r));
                        let (nx, ny) = (crate::tensor::norm(x), crate::tensor::norm(y));
                        if nx == 0.0 || ny == 0.0 {
                            continue;
                        }
                        let c = dot(x, y) / (nx * ny);
                        let gr = g.data()[r];
                        let dar = row_of_mut(&mut da, r);
                        for (k, d) in dar.iter_mut().enumerate() {
                            *d = gr * (y[k] / (nx * ny) - c * x[k] / (nx * nx));
                        }
                        let dbr = row_of_mut(&mut db, r);
                        for (k, d) in dbr.iter_mut().enumerate() {
                            *d = gr * (x[k] / (nx * ny) - c * y[k] / (ny * ny));
                        }
                    }
                    accumulate(&mut adj, *a, da);
                    accumulate(&mut adj, *b, db);
                }
                Op::NormalizeRows(a) => {
                    let av = val(a);
                    let y = &node.value;
                    let mut da = Tensor::zeros(av.shape());
                    for r in 0..row_count(av) {
                        let n = crate::tensor::norm(row_of(av, r));
                        let (yr, gr) = (row_of(y, r), row_of(&g, r));
                        let yg = dot(yr, gr);
                        let dar = row_of_mut(&mut da, r);
                        for (k, d) in dar.iter_mut().enumerate() {
                            *d = (gr[k] - yr[k] * yg) / n;
                        }
                    }
                    accumulate(&mut adj, *a, da);
                }
            }
        }

        let mut by_leaf = HashMap::new();
        for (i, node) in self.nodes[..=root.0].iter().enumerate() {
            if let Op::Leaf { trainable: true } = node.op {
                let grad = adj[i]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                by_leaf.insert(NodeId(i), grad);
            }
        }
        Ok(Gradients { by_leaf })
    }

    /// Largest relative disagreement between the analytic gradient of `root`
    /// with respect to `leaf` and a central finite difference of width `step`.
    ///
    /// The relative error is `|analytic - numeric| / max(1, |analytic|)`.
    /// Leaf values and node values are restored before returning.
    pub fn gradient_check(&mut self, root: NodeId, leaf: NodeId, step: f64) -> Result<f64> {
        if step <= 0.0 || !step.is_finite() {
            return Err(Error::invalid("finite-difference step must be positive"));
        }
        if !matches!(self.nodes[leaf.0].op, Op::Leaf { .. }) {
            return Err(Error::invalid(format!("node {} is not a leaf", leaf.0)));
        }
        self.forward(root)?;
        let analytic = match self.backward(root)?.get(leaf) {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.nodes[leaf.0].value.shape()),
        };
        let original = self.nodes[leaf.0].value.clone();
        let mut worst: f64 = 0.0;
        let result = (|| {
            for k in 0..original.len() {
                let mut plus = original.clone();
                plus.data_mut()[k] += step;
                self.nodes[leaf.0].value = plus;
                let f_plus = self.forward(root)?.item();
                let mut minus = original.clone();
                minus.data_mut()[k] -= step;
                self.nodes[leaf.0].value = minus;
                let f_minus = self.forward(root)?.item();
                let numeric = (f_plus - f_minus) / (2.0 * step);
                if !numeric.is_finite() {
                    return Err(Error::NonFinite {
                        node: root.0,
                        op: "finite difference",
                    });
                }
                let a = analytic.data()[k];
                worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
            }
            Ok(worst)
        })();
        self.nodes[leaf.0].value = original;
        self.forward(root)?;
        result
    }
}

fn accumulate(adj: &mut [Option<Tensor>], id: NodeId, grad: Tensor) {
    match &mut adj[id.0] {
        Some(existing) => existing
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .for_each(|(e, g)| *e += g),
        slot @ None => *slot = Some(grad),
    }
}

/// Rows seen by the row-wise ops: a vector is a single row.
fn row_count(t: &Tensor) -> usize {
    if t.rank() == 2 {
        t.rows()
    } else {
        1
    }
}

fn row_of(t: &Tensor, i: usize) -> &[f64] {
    if t.rank() == 2 {
        t.row(i)
    } else {
        t.data()
    }
}

fn row_of_mut(t: &mut Tensor, i: usize) -> &mut [f64] {
    if t.rank() == 2 {
        t.row_mut(i)
    } else {
        t.data_mut()
    }
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (crate::tensor::norm(a), crate::tensor::norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_value_and_gradient() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(3.0));
        let y = g.mul(x, x).unwrap();
        assert_eq!(g.value(y).item(), 9.0);
        assert_eq!(g.backward(y).unwrap().get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn cos_at_zero() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(0.0));
        let y = g.cos(x).unwrap();
        assert_eq!(g.value(y).item(), 1.0);
        assert_eq!(g.backward(y).unwrap().get(x).unwrap().item(), 0.0);
    }

    #[test]
    fn projection_onto_itself() {
        // ||Λ^{1/2} V φ||² with r = 1
        let u = vec![0.6, 0.8];
        let mut g = Graph::new();
        let v = g.param(Tensor::matrix(1, 2, u.clone()).unwrap());
        let lam = g.param(Tensor::vector(vec![1.0]));
        let phi = g.constant(Tensor::vector(u));
        let proj = g.matmul(v, phi).unwrap();
        let sq = g.square(proj).unwrap();
        let w = g.mul(sq, lam).unwrap();
        let f = g.sum(w).unwrap();
        assert!((g.value(f).item() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        let y = g.square(x).unwrap();
        assert!(matches!(g.backward(y), Err(Error::NonScalarRoot(_))));
    }

    #[test]
    fn shape_mismatch_names_op() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::vector(vec![1.0, 2.0]));
        let b = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
        match g.add(a, b) {
            Err(Error::ShapeMismatch { op, left, right }) => {
                assert_eq!(op, "add");
                assert_eq!(left, vec![2]);
                assert_eq!(right, vec![3]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_reports_node() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::vector(vec![0.0, 0.0]));
        match g.normalize_rows(a) {
            Err(Error::NonFinite { node, .. }) => assert_eq!(node, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn constants_get_no_gradient_and_unused_params_get_zero() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::scalar(2.0));
        let unused = g.param(Tensor::vector(vec![1.0, 1.0]));
        let x = g.param(Tensor::scalar(1.5));
        let y = g.mul(c, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(unused).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(g.gradient_check(y, unused, 1e-5).unwrap(), 0.0);
    }

    #[test]
    fn forward_replays_after_leaf_update() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(2.0));
        let y = g.square(x).unwrap();
        g.set_value(x, Tensor::scalar(5.0)).unwrap();
        assert_eq!(g.forward(y).unwrap().item(), 25.0);
    }

    #[test]
    fn log_guard_keeps_loss_finite() {
        let mut g = Graph::new();
        let x = g.param(Tensor::scalar(0.0));
        let y = g.log(x).unwrap();
        assert_eq!(g.value(y).item(), LOG_GUARD.ln());
        assert_eq!(g.backward(y).unwrap().get(x).unwrap().item(), 0.0);
    }

    #[test]
    fn linear_graph_gradient_check_is_exact() {
        let mut g = Graph::new();
        let w = g.param(Tensor::vector(vec![0.3, -1.2, 2.0]));
        let x = g.constant(Tensor::vector(vec![1.0, 0.5, -0.25]));
        let y = g.dot(w, x).unwrap();
        assert!(g.gradient_check(y, w, 1e-5).unwrap() < 1e-8);
    }
}
