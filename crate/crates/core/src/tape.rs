//! Tape-based reverse-mode automatic differentiation.
//!
//! Every differentiable operation appends a node to a [`Tape`]; calling
//! [`Tape::backward`] on a scalar loss node sweeps the tape in reverse and
//! accumulates adjoints. The op set is exactly what a small transformer
//! encoder with tied output embeddings needs: matrix product, broadcast
//! add, row gather/concat/slice, layer norm, row softmax, GELU, sigmoid,
//! and two numerically stable fused losses (softmax cross-entropy against
//! class indices, elementwise binary cross-entropy against 0/1 targets).
//!
//! Values are owned by the tape, so a forward pass borrows parameters once
//! via [`Tape::parameter`] and reads results back with [`Tape::value`].
//! Gradients of parameters that do not influence the loss come back as zero
//! tensors of the parameter's shape.

use crate::tensor::{matmul_impl, Tensor, TensorError};

/// Epsilon inside the layer-norm variance square root.
pub const LAYER_NORM_EPS: f64 = 1e-12;

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// `[r, c] + [c]` with the right-hand side broadcast over rows.
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    Transpose(NodeId),
    GatherRows(NodeId, Vec<usize>),
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    SliceCols(NodeId, usize, usize),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
    },
    SoftmaxRows(NodeId),
    Gelu(NodeId),
    Sigmoid(NodeId),
    SumAll(NodeId),
    /// Mean over rows of `logsumexp(row) - row[target]`.
    CeLoss {
        logits: NodeId,
        targets: Vec<usize>,
    },
    /// Mean over rows of the summed stable BCE-with-logits terms.
    BceLoss {
        logits: NodeId,
        targets: Tensor,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    parameter: bool,
}

/// Adjoints produced by [`Tape::backward`].
///
/// Parameter nodes always have an entry (zeros if the parameter never
/// reached the loss); other nodes have one only if they were touched by the
/// reverse sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }
}

/// Records a computation as it runs so it can be differentiated.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape { nodes: Vec::new() }
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

    fn push(&mut self, value: Tensor, op: Op, parameter: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            parameter,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Leaf whose gradient will be reported by [`Tape::backward`].
    pub fn parameter(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf treated as fixed data; no gradient is retained for it.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let value = matmul_impl(self.value(a), self.value(b))?;
        Ok(self.push(value, Op::Matmul(a, b), false))
    }

    /// Elementwise sum of two tensors with identical shapes.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "add",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let mut value = va.clone();
        for (x, y) in value.data_mut().iter_mut().zip(vb.data()) {
            *x += y;
        }
        Ok(self.push(value, Op::Add(a, b), false))
    }

    /// `[r, c] + [c]`: broadcast a bias row over every row of a matrix.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId, TensorError> {
        let (va, vb) = (self.value(a), self.value(bias));
        let cols = va.cols();
        if !va.is_matrix() || vb.numel() != cols {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let mut value = va.clone();
        let bias_data: Vec<f64> = vb.data().to_vec();
        for r in 0..value.rows() {
            for (x, y) in value.row_mut(r).iter_mut().zip(&bias_data) {
                *x += y;
            }
        }
        Ok(self.push(value, Op::AddRow(a, bias), false))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let mut value = self.value(a).clone();
        for x in value.data_mut() {
            *x *= factor;
        }
        self.push(value, Op::Scale(a, factor), false)
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let value = self.value(a).transpose()?;
        Ok(self.push(value, Op::Transpose(a), false))
    }

    /// Select rows of a matrix by index; indices may repeat. The backward
    /// pass scatter-adds, so repeated rows accumulate their gradients.
    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId, TensorError> {
        let va = self.value(a);
        if !va.is_matrix() {
            return Err(TensorError::BadShape {
                op: "gather_rows",
                expected: "a 2-D tensor",
                shape: va.shape().to_vec(),
            });
        }
        let (rows, cols) = (va.rows(), va.cols());
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            if i >= rows {
                return Err(TensorError::IndexOutOfBounds {
                    op: "gather_rows",
                    index: i,
                    bound: rows,
                });
            }
            data.extend_from_slice(va.row(i));
        }
        let value = Tensor::from_vec(&[indices.len(), cols], data)?;
        Ok(self.push(value, Op::GatherRows(a, indices.to_vec()), false))
    }

    /// Stack matrices with equal column counts on top of each other.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::BadShape {
                op: "concat_rows",
                expected: "at least one part",
                shape: vec![],
            });
        }
        let cols = self.value(parts[0]).cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if !v.is_matrix() || v.cols() != cols {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: self.value(parts[0]).shape().to_vec(),
                    rhs: v.shape().to_vec(),
                });
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let value = Tensor::from_vec(&[rows, cols], data)?;
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), false))
    }

    /// Stack matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::BadShape {
                op: "concat_cols",
                expected: "at least one part",
                shape: vec![],
            });
        }
        let rows = self.value(parts[0]).rows();
        let mut cols = 0;
        for &p in parts {
            let v = self.value(p);
            if !v.is_matrix() || v.rows() != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.value(parts[0]).shape().to_vec(),
                    rhs: v.shape().to_vec(),
                });
            }
            cols += v.cols();
        }
        let mut value = Tensor::zeros(&[rows, cols]);
        for r in 0..rows {
            let mut offset = 0;
            for &p in parts {
                let v = self.value(p);
                let c = v.cols();
                value.row_mut(r)[offset..offset + c].copy_from_slice(v.row(r));
                offset += c;
            }
        }
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), false))
    }

    /// Columns `start .. start + len` of a matrix.
    pub fn slice_cols(
        &mut self,
        a: NodeId,
        start: usize,
        len: usize,
    ) -> Result<NodeId, TensorError> {
        let va = self.value(a);
        if !va.is_matrix() {
            return Err(TensorError::BadShape {
                op: "slice_cols",
                expected: "a 2-D tensor",
                shape: va.shape().to_vec(),
            });
        }
        if start + len > va.cols() {
            return Err(TensorError::IndexOutOfBounds {
                op: "slice_cols",
                index: start + len,
                bound: va.cols(),
            });
        }
        let rows = va.rows();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&va.row(r)[start..start + len]);
        }
        let value = Tensor::from_vec(&[rows, len], data)?;
        Ok(self.push(value, Op::SliceCols(a, start, len), false))
    }

    /// Per-row layer normalisation with learned gain and bias.
    ///
    /// Uses the population variance (divide by the row length) and adds
    /// [`LAYER_NORM_EPS`] inside the square root.
    pub fn layer_norm(
        &mut self,
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
    ) -> Result<NodeId, TensorError> {
        let vx = self.value(x);
        let cols = vx.cols();
        if !vx.is_matrix() {
            return Err(TensorError::BadShape {
                op: "layer_norm",
                expected: "a 2-D tensor",
                shape: vx.shape().to_vec(),
            });
        }
        if self.value(gain).numel() != cols || self.value(bias).numel() != cols {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                lhs: vx.shape().to_vec(),
                rhs: self.value(gain).shape().to_vec(),
            });
        }
        let vx = self.value(x).clone();
        let g: Vec<f64> = self.value(gain).data().to_vec();
        let b: Vec<f64> = self.value(bias).data().to_vec();
        let mut value = Tensor::zeros(vx.shape());
        for r in 0..vx.rows() {
            let row = vx.row(r);
            let (mean, inv_std) = row_moments(row);
            let out = value.row_mut(r);
            for c in 0..cols {
                out[c] = g[c] * (row[c] - mean) * inv_std + b[c];
            }
        }
        Ok(self.push(value, Op::LayerNorm { x, gain, bias }, false))
    }

    /// Row-wise softmax, computed against the row maximum for stability.
    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId, TensorError> {
        let va = self.value(a);
        if !va.is_matrix() {
            return Err(TensorError::BadShape {
                op: "softmax_rows",
                expected: "a 2-D tensor",
                shape: va.shape().to_vec(),
            });
        }
        let mut value = va.clone();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                sum += *x;
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
        }
        Ok(self.push(value, Op::SoftmaxRows(a), false))
    }

    /// Exact GELU, `x * Phi(x)` with the Gaussian CDF via `erf`.
    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let mut value = self.value(a).clone();
        for x in value.data_mut() {
            *x *= gauss_cdf(*x);
        }
        self.push(value, Op::Gelu(a), false)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let mut value = self.value(a).clone();
        for x in value.data_mut() {
            *x = sigmoid_scalar(*x);
        }
        self.push(value, Op::Sigmoid(a), false)
    }

    /// Sum of every element, as a scalar node.
    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let total: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(total), Op::SumAll(a), false)
    }

    /// Softmax cross-entropy against one class index per row, averaged over
    /// rows. Evaluated as `logsumexp(row) - row[target]`, never through an
    /// explicit softmax, so it stays finite for extreme logits.
    pub fn ce_loss(&mut self, logits: NodeId, targets: &[usize]) -> Result<NodeId, TensorError> {
        let v = self.value(logits);
        if !v.is_matrix() || v.rows() == 0 {
            return Err(TensorError::BadShape {
                op: "ce_loss",
                expected: "a 2-D tensor with at least one row",
                shape: v.shape().to_vec(),
            });
        }
        if targets.len() != v.rows() {
            return Err(TensorError::ShapeMismatch {
                op: "ce_loss",
                lhs: v.shape().to_vec(),
                rhs: vec![targets.len()],
            });
        }
        let cols = v.cols();
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            if t >= cols {
                return Err(TensorError::IndexOutOfBounds {
                    op: "ce_loss",
                    index: t,
                    bound: cols,
                });
            }
            let row = v.row(r);
            total += log_sum_exp(row) - row[t];
        }
        let value = Tensor::scalar(total / targets.len() as f64);
        Ok(self.push(
            value,
            Op::CeLoss {
                logits,
                targets: targets.to_vec(),
            },
            false,
        ))
    }

    /// Summed binary cross-entropy with logits per row, averaged over rows.
    ///
    /// Each element contributes `max(y, 0) - y*h + ln(1 + exp(-|y|))`, the
    /// overflow-free form of `-h*ln(sigma(y)) - (1-h)*ln(1-sigma(y))`.
    /// Targets must be a 0/1 matrix of the same shape as the logits.
    pub fn bce_loss(&mut self, logits: NodeId, targets: &Tensor) -> Result<NodeId, TensorError> {
        let v = self.value(logits);
        if !v.is_matrix() || v.rows() == 0 {
            return Err(TensorError::BadShape {
                op: "bce_loss",
                expected: "a 2-D tensor with at least one row",
                shape: v.shape().to_vec(),
            });
        }
        if v.shape() != targets.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "bce_loss",
                lhs: v.shape().to_vec(),
                rhs: targets.shape().to_vec(),
            });
        }
        if targets.data().iter().any(|&h| h != 0.0 && h != 1.0) {
            return Err(TensorError::BadShape {
                op: "bce_loss",
                expected: "target entries in {0, 1}",
                shape: targets.shape().to_vec(),
            });
        }
        let mut total = 0.0;
        for (&y, &h) in v.data().iter().zip(targets.data()) {
            total += y.max(0.0) - y * h + (-y.abs()).exp().ln_1p();
        }
        let value = Tensor::scalar(total / v.rows() as f64);
        Ok(self.push(
            value,
            Op::BceLoss {
                logits,
                targets: targets.clone(),
            },
            false,
        ))
    }

    /// Reverse sweep from a scalar loss node. Returns one gradient per
    /// parameter leaf (zeros when the parameter never reached the loss).
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, TensorError> {
        let loss_value = self.value(loss);
        if !loss_value.is_scalar() {
            return Err(TensorError::NonScalarLoss {
                shape: loss_value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::from_vec(loss_value.shape(), vec![1.0])?);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.accumulate_inputs(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        for (i, node) in self.nodes.iter().enumerate() {
            if node.parameter && grads[i].is_none() {
                grads[i] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate_inputs(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut bump = |id: NodeId, delta: Tensor| {
            match &mut grads[id.0] {
                Some(acc) => acc
                    .add_scaled(&delta, 1.0)
                    .expect("adjoint shape matches node value"),
                slot @ None => *slot = Some(delta),
            };
        };
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let da = matmul_impl(g, &vb.transpose().expect("matmul input is 2-D"))
                    .expect("shapes checked at record time");
                let db = matmul_impl(&va.transpose().expect("matmul input is 2-D"), g)
                    .expect("shapes checked at record time");
                bump(*a, da);
                bump(*b, db);
            }
            Op::Add(a, b) => {
                bump(*a, g.clone());
                bump(*b, g.clone());
            }
            Op::AddRow(a, bias) => {
                bump(*a, g.clone());
                let vb = self.value(*bias);
                let mut db = Tensor::zeros(vb.shape());
                let cols = vb.numel();
                for r in 0..g.rows() {
                    for (acc, &x) in db.data_mut().iter_mut().zip(g.row(r)) {
                        *acc += x;
                    }
                }
                debug_assert_eq!(db.numel(), cols);
                bump(*bias, db);
            }
            Op::Scale(a, k) => {
                let mut da = g.clone();
                for x in da.data_mut() {
                    *x *= k;
                }
                bump(*a, da);
            }
            Op::Transpose(a) => {
                bump(*a, g.transpose().expect("transpose output is 2-D"));
            }
            Op::GatherRows(a, indices) => {
                let va = self.value(*a);
                let mut da = Tensor::zeros(va.shape());
                for (out_row, &src) in indices.iter().enumerate() {
                    for (acc, &x) in da.row_mut(src).iter_mut().zip(g.row(out_row)) {
                        *acc += x;
                    }
                }
                bump(*a, da);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let rows = self.value(p).rows();
                    let cols = self.value(p).cols();
                    let mut dp = Tensor::zeros(self.value(p).shape());
                    for r in 0..rows {
                        dp.row_mut(r).copy_from_slice(g.row(offset + r));
                    }
                    debug_assert_eq!(dp.cols(), cols);
                    offset += rows;
                    bump(p, dp);
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let v = self.value(p);
                    let (rows, cols) = (v.rows(), v.cols());
                    let mut dp = Tensor::zeros(v.shape());
                    for r in 0..rows {
                        dp.row_mut(r)
                            .copy_from_slice(&g.row(r)[offset..offset + cols]);
                    }
                    offset += cols;
                    bump(p, dp);
                }
            }
            Op::SliceCols(a, start, len) => {
                let va = self.value(*a);
                let mut da = Tensor::zeros(va.shape());
                for r in 0..va.rows() {
                    da.row_mut(r)[*start..*start + *len].copy_from_slice(g.row(r));
                }
                bump(*a, da);
            }
            Op::LayerNorm { x, gain, bias } => {
                let vx = self.value(*x);
                let vg = self.value(*gain);
                let cols = vx.cols();
                let n = cols as f64;
                let mut dx = Tensor::zeros(vx.shape());
                let mut dg = Tensor::zeros(vg.shape());
                let mut db = Tensor::zeros(self.value(*bias).shape());
                for r in 0..vx.rows() {
                    let row = vx.row(r);
                    let (mean, inv_std) = row_moments(row);
                    let gy = g.row(r);
                    // dxhat[c] = gy[c] * gain[c]; reduce the two row sums
                    // needed by the chain rule through mean and variance.
                    let mut sum_dxhat = 0.0;
                    let mut sum_dxhat_xhat = 0.0;
                    for c in 0..cols {
                        let xhat = (row[c] - mean) * inv_std;
                        let dxhat = gy[c] * vg.data()[c];
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * xhat;
                        dg.data_mut()[c] += gy[c] * xhat;
                        db.data_mut()[c] += gy[c];
                    }
                    let out = dx.row_mut(r);
                    for c in 0..cols {
                        let xhat = (row[c] - mean) * inv_std;
                        let dxhat = gy[c] * vg.data()[c];
                        out[c] = inv_std * (dxhat - sum_dxhat / n - xhat * sum_dxhat_xhat / n);
                    }
                }
                bump(*x, dx);
                bump(*gain, dg);
                bump(*bias, db);
            }
            Op::SoftmaxRows(a) => {
                let p = &self.nodes[i].value;
                let mut da = Tensor::zeros(p.shape());
                for r in 0..p.rows() {
                    let prow = p.row(r);
                    let gy = g.row(r);
                    let dot: f64 = prow.iter().zip(gy).map(|(p, g)| p * g).sum();
                    for (out, (&pv, &gv)) in da.row_mut(r).iter_mut().zip(prow.iter().zip(gy)) {
                        *out = pv * (gv - dot);
                    }
                }
                bump(*a, da);
            }
            Op::Gelu(a) => {
                let va = self.value(*a);
                let mut da = g.clone();
                for (out, &x) in da.data_mut().iter_mut().zip(va.data()) {
                    let pdf = (-0.5 * x * x).exp() / SQRT_2PI;
                    *out *= gauss_cdf(x) + x * pdf;
                }
                bump(*a, da);
            }
            Op::Sigmoid(a) => {
                let s = &self.nodes[i].value;
                let mut da = g.clone();
                for (out, &sv) in da.data_mut().iter_mut().zip(s.data()) {
                    *out *= sv * (1.0 - sv);
                }
                bump(*a, da);
            }
            Op::SumAll(a) => {
                let va = self.value(*a);
                bump(*a, Tensor::filled(va.shape(), g.scalar_value()));
            }
            Op::CeLoss { logits, targets } => {
                let v = self.value(*logits);
                let scale = g.scalar_value() / targets.len() as f64;
                let mut da = Tensor::zeros(v.shape());
                for (r, &t) in targets.iter().enumerate() {
                    let row = v.row(r);
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = row.iter().map(|x| (x - max).exp()).sum();
                    for (c, out) in da.row_mut(r).iter_mut().enumerate() {
                        let p = (row[c] - max).exp() / sum;
                        let indicator = if c == t { 1.0 } else { 0.0 };
                        *out = scale * (p - indicator);
                    }
                }
                bump(*logits, da);
            }
            Op::BceLoss { logits, targets } => {
                let v = self.value(*logits);
                let scale = g.scalar_value() / v.rows() as f64;
                let mut da = Tensor::zeros(v.shape());
                for ((out, &y), &h) in da.data_mut().iter_mut().zip(v.data()).zip(targets.data()) {
                    *out = scale * (sigmoid_scalar(y) - h);
                }
                bump(*logits, da);
            }
        }
    }
}

fn row_moments(row: &[f64]) -> (f64, f64) {
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + LAYER_NORM_EPS).sqrt())
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn gauss_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn sigmoid_scalar(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}
