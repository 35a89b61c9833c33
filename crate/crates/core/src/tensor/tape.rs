use std::borrow::Cow;

use crate::error::{GlamError, Result};

use super::{gemm, MatView, Scalar, SparseAdjacency, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    id: usize,
    rows: usize,
    cols: usize,
}

impl Var {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn len(&self) -> usize {
        self.rows * self.cols
    }
}

enum Op<'a, T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    Spmm(&'a SparseAdjacency<T>, Var),
    Norm {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    SoftmaxRows(Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        row_weights: Vec<T>,
        total_weight: T,
    },
    Sum(Var),
}

struct Node<'a, T: Clone> {
    value: Cow<'a, [T]>,
    op: Op<'a, T>,
    needs_grad: bool,
}

/// Per-column statistics measured by a training-mode batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Biased (population) variance.
    pub var: Vec<T>,
    pub count: usize,
}

/// Operation record for one forward pass. Consumed by [`Tape::backward`].
pub struct Tape<'a, T: Scalar> {
    nodes: Vec<Node<'a, T>>,
}

impl<'a, T: Scalar> Default for Tape<'a, T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, a: Var, b: Var) -> GlamError {
    GlamError::Shape { op, left: a.shape(), right: b.shape() }
}

impl<'a, T: Scalar> Tape<'a, T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Cow<'a, [T]>, op: Op<'a, T>, needs_grad: bool) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        debug_assert!(
            matches!(op, Op::Leaf) || value.iter().all(|v| v.is_finite()),
            "non-finite value produced by a recorded op"
        );
        self.nodes.push(Node { value, op, needs_grad });
        Var { id: self.nodes.len() - 1, rows, cols }
    }

    fn grad_of(&self, v: Var) -> bool {
        self.nodes[v.id].needs_grad
    }

    /// Constant input (no gradient).
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        let (r, c) = t.shape();
        self.push(r, c, Cow::Owned(t.into_data()), Op::Leaf, false)
    }

    /// Constant input borrowed for the tape's lifetime (no gradient).
    pub fn input_ref(&mut self, t: &'a Tensor<T>) -> Var {
        self.push(t.rows(), t.cols(), Cow::Borrowed(t.data()), Op::Leaf, false)
    }

    /// Leaf whose gradient is tracked (parameters, or inputs under test).
    pub fn leaf(&mut self, t: &'a Tensor<T>) -> Var {
        self.push(t.rows(), t.cols(), Cow::Borrowed(t.data()), Op::Leaf, true)
    }

    pub fn leaf_owned(&mut self, t: Tensor<T>) -> Var {
        let (r, c) = t.shape();
        self.push(r, c, Cow::Owned(t.into_data()), Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.id].value
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        Tensor::new(v.rows, v.cols, self.value(v).to_vec()).expect("recorded shape")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        if a.cols != b.rows {
            return Err(shape_err("matmul", a, b));
        }
        let mut out = vec![T::zero(); a.rows * b.cols];
        gemm(
            MatView::new(self.value(a), a.rows, a.cols),
            MatView::new(self.value(b), b.rows, b.cols),
            T::zero(),
            &mut out,
        );
        let g = self.grad_of(a) || self.grad_of(b);
        Ok(self.push(a.rows, b.cols, Cow::Owned(out), Op::MatMul(a, b), g))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if a.shape() != b.shape() {
            return Err(shape_err("add", a, b));
        }
        let out: Vec<T> = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x + y).collect();
        let g = self.grad_of(a) || self.grad_of(b);
        Ok(self.push(a.rows, a.cols, Cow::Owned(out), Op::Add(a, b), g))
    }

    /// Adds a `1 x cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        if row.rows != 1 || row.cols != a.cols {
            return Err(shape_err("add_row", a, row));
        }
        let r = self.value(row);
        let out: Vec<T> = self
            .value(a)
            .chunks_exact(a.cols.max(1))
            .flat_map(|chunk| chunk.iter().zip(r).map(|(&x, &b)| x + b))
            .collect();
        let g = self.grad_of(a) || self.grad_of(row);
        Ok(self.push(a.rows, a.cols, Cow::Owned(out), Op::AddRow(a, row), g))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if a.shape() != b.shape() {
            return Err(shape_err("mul", a, b));
        }
        let out: Vec<T> = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x * y).collect();
        let g = self.grad_of(a) || self.grad_of(b);
        Ok(self.push(a.rows, a.cols, Cow::Owned(out), Op::Mul(a, b), g))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let out: Vec<T> = self.value(a).iter().map(|&x| x * s).collect();
        let g = self.grad_of(a);
        self.push(a.rows, a.cols, Cow::Owned(out), Op::Scale(a, s), g)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out: Vec<T> = self.value(a).iter().map(|&x| if x > T::zero() { x } else { T::zero() }).collect();
        let g = self.grad_of(a);
        self.push(a.rows, a.cols, Cow::Owned(out), Op::Relu(a), g)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(GlamError::Contract("concat_cols of nothing".into()));
        };
        let rows = first.rows;
        if let Some(bad) = parts.iter().find(|p| p.rows != rows) {
            return Err(shape_err("concat_cols", *first, *bad));
        }
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                out.extend_from_slice(&self.value(*p)[r * p.cols..(r + 1) * p.cols]);
            }
        }
        let g = parts.iter().any(|p| self.grad_of(*p));
        Ok(self.push(rows, cols, Cow::Owned(out), Op::ConcatCols(parts.to_vec()), g))
    }

    /// Output row `k` is row `indices[k]` of `a`.
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= a.rows) {
            return Err(GlamError::Shape { op: "gather_rows", left: a.shape(), right: (bad, 0) });
        }
        let src = self.value(a);
        let mut out = Vec::with_capacity(indices.len() * a.cols);
        for &i in indices {
            out.extend_from_slice(&src[i * a.cols..(i + 1) * a.cols]);
        }
        let g = self.grad_of(a);
        Ok(self.push(indices.len(), a.cols, Cow::Owned(out), Op::GatherRows(a, indices.to_vec()), g))
    }

    pub fn spmm(&mut self, adj: &'a SparseAdjacency<T>, x: Var) -> Result<Var> {
        if adj.n() != x.rows {
            return Err(GlamError::Shape { op: "spmm", left: (adj.n(), adj.n()), right: x.shape() });
        }
        let mut out = vec![T::zero(); x.len()];
        adj.spmm_into(self.value(x), x.cols, &mut out);
        let g = self.grad_of(x);
        Ok(self.push(x.rows, x.cols, Cow::Owned(out), Op::Spmm(adj, x), g))
    }

    fn check_norm_params(&self, x: Var, gamma: Var, beta: Var) -> Result<()> {
        if gamma.shape() != (1, x.cols) {
            return Err(shape_err("batch_norm", x, gamma));
        }
        if beta.shape() != (1, x.cols) {
            return Err(shape_err("batch_norm", x, beta));
        }
        Ok(())
    }

    fn normalize(&mut self, x: Var, gamma: Var, beta: Var, mean: Vec<T>, inv_std: Vec<T>, batch_stats: bool) -> Var {
        let cols = x.cols;
        let (gv, bv) = (self.value(gamma), self.value(beta));
        let mut out = Vec::with_capacity(x.len());
        for row in self.value(x).chunks_exact(cols.max(1)) {
            for j in 0..cols {
                out.push((row[j] - mean[j]) * inv_std[j] * gv[j] + bv[j]);
            }
        }
        let g = self.grad_of(x) || self.grad_of(gamma) || self.grad_of(beta);
        self.push(x.rows, cols, Cow::Owned(out), Op::Norm { x, gamma, beta, mean, inv_std, batch_stats }, g)
    }

    /// Batch norm over rows using this batch's statistics.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<(Var, BatchStats<T>)> {
        self.check_norm_params(x, gamma, beta)?;
        let (n, cols) = x.shape();
        let mut mean = vec![T::zero(); cols];
        let mut var = vec![T::zero(); cols];
        if n > 0 {
            let xs = self.value(x);
            for row in xs.chunks_exact(cols.max(1)) {
                for (m, &v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            let inv_n = T::one() / T::of_f64(n as f64);
            mean.iter_mut().for_each(|m| *m *= inv_n);
            for row in xs.chunks_exact(cols.max(1)) {
                for j in 0..cols {
                    let d = row[j] - mean[j];
                    var[j] += d * d;
                }
            }
            var.iter_mut().for_each(|v| *v *= inv_n);
        }
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let out = self.normalize(x, gamma, beta, mean.clone(), inv_std, true);
        Ok((out, BatchStats { mean, var, count: n }))
    }

    /// Batch norm with fixed (running) statistics.
    pub fn batch_norm_fixed(&mut self, x: Var, gamma: Var, beta: Var, mean: &[T], var: &[T], eps: T) -> Result<Var> {
        self.check_norm_params(x, gamma, beta)?;
        if mean.len() != x.cols || var.len() != x.cols {
            return Err(GlamError::Shape { op: "batch_norm_fixed", left: x.shape(), right: (1, mean.len()) });
        }
        let inv_std = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        Ok(self.normalize(x, gamma, beta, mean.to_vec(), inv_std, false))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).to_vec();
        for row in out.chunks_exact_mut(a.cols.max(1)) {
            softmax_in_place(row);
        }
        let g = self.grad_of(a);
        self.push(a.rows, a.cols, Cow::Owned(out), Op::SoftmaxRows(a), g)
    }

    /// Mean cross-entropy of row-wise softmax against integer labels.
    ///
    /// With `class_weights`, each row is weighted by its label's weight and the
    /// sum is divided by the total weight. An empty batch yields 0.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize], class_weights: Option<&[T]>) -> Result<Var> {
        if labels.len() != logits.rows {
            return Err(GlamError::Contract(format!(
                "{} labels for {} logit rows",
                labels.len(),
                logits.rows
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= logits.cols) {
            return Err(GlamError::Contract(format!("label {bad} out of range for {} classes", logits.cols)));
        }
        if let Some(w) = class_weights {
            if w.len() != logits.cols {
                return Err(GlamError::Contract(format!("{} class weights for {} classes", w.len(), logits.cols)));
            }
        }
        let row_weights: Vec<T> = labels.iter().map(|&l| class_weights.map_or(T::one(), |w| w[l])).collect();
        let total_weight: T = row_weights.iter().copied().sum();
        let mut loss = T::zero();
        if total_weight > T::zero() {
            let xs = self.value(logits);
            for (i, row) in xs.chunks_exact(logits.cols.max(1)).enumerate() {
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
                loss += row_weights[i] * (lse - row[labels[i]]);
            }
            loss = loss / total_weight;
        }
        let g = self.grad_of(logits);
        Ok(self.push(
            1,
            1,
            Cow::Owned(vec![loss]),
            Op::CrossEntropy { logits, labels: labels.to_vec(), row_weights, total_weight },
            g,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: T = self.value(a).iter().copied().sum();
        let g = self.grad_of(a);
        self.push(1, 1, Cow::Owned(vec![s]), Op::Sum(a), g)
    }

    /// Reverse pass from a scalar. Consumes the record.
    pub fn backward(self, loss: Var) -> Result<Gradients<T>> {
        if loss.shape() != (1, 1) {
            return Err(GlamError::Contract(format!("backward from non-scalar of shape {:?}", loss.shape())));
        }
        let nodes = self.nodes;
        let mut grads: Vec<Option<Vec<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(vec![T::one()]);

        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if matches!(node.op, Op::Leaf) || !node.needs_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let wants = |v: &Var| nodes[v.id].needs_grad;
            let val = |v: &Var| -> &[T] { &nodes[v.id].value };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let n_out = b.cols;
                    if wants(a) {
                        // dA += G * B^T
                        let buf = slot(&mut grads, *a);
                        gemm(MatView::new(&g, a.rows, n_out), MatView::new(val(b), b.rows, b.cols).t(), T::one(), buf);
                    }
                    if wants(b) {
                        // dB += A^T * G
                        let buf = slot(&mut grads, *b);
                        gemm(MatView::new(val(a), a.rows, a.cols).t(), MatView::new(&g, a.rows, n_out), T::one(), buf);
                    }
                }
                Op::Add(a, b) => {
                    for v in [a, b] {
                        if wants(v) {
                            axpy(slot(&mut grads, *v), &g, T::one());
                        }
                    }
                }
                Op::AddRow(a, row) => {
                    if wants(a) {
                        axpy(slot(&mut grads, *a), &g, T::one());
                    }
                    if wants(row) {
                        let buf = slot(&mut grads, *row);
                        for chunk in g.chunks_exact(row.cols.max(1)) {
                            axpy(buf, chunk, T::one());
                        }
                    }
                }
                Op::Mul(a, b) => {
                    if wants(a) {
                        let other = val(b);
                        let buf = slot(&mut grads, *a);
                        for ((d, &gi), &o) in buf.iter_mut().zip(&g).zip(other) {
                            *d += gi * o;
                        }
                    }
                    if wants(b) {
                        let other = val(a);
                        let buf = slot(&mut grads, *b);
                        for ((d, &gi), &o) in buf.iter_mut().zip(&g).zip(other) {
                            *d += gi * o;
                        }
                    }
                }
                Op::Scale(a, s) => axpy(slot(&mut grads, *a), &g, *s),
                Op::Relu(a) => {
                    let out = &node.value;
                    let buf = slot(&mut grads, *a);
                    for ((d, &gi), &y) in buf.iter_mut().zip(&g).zip(out.iter()) {
                        if y > T::zero() {
                            *d += gi;
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let total: usize = parts.iter().map(|p| p.cols).sum();
                    let mut offset = 0;
                    for p in parts {
                        if wants(p) {
                            let buf = slot(&mut grads, *p);
                            for r in 0..p.rows {
                                let src = &g[r * total + offset..r * total + offset + p.cols];
                                axpy(&mut buf[r * p.cols..(r + 1) * p.cols], src, T::one());
                            }
                        }
                        offset += p.cols;
                    }
                }
                Op::GatherRows(a, indices) => {
                    let cols = a.cols;
                    let buf = slot(&mut grads, *a);
                    for (k, &i) in indices.iter().enumerate() {
                        axpy(&mut buf[i * cols..(i + 1) * cols], &g[k * cols..(k + 1) * cols], T::one());
                    }
                }
                Op::Spmm(adj, x) => {
                    let buf = slot(&mut grads, *x);
                    adj.spmm_transpose_acc(&g, x.cols, buf);
                }
                Op::Norm { x, gamma, beta, mean, inv_std, batch_stats } => {
                    let (n, cols) = x.shape();
                    let xs = val(x);
                    let gam = val(gamma);
                    let xhat = |i: usize, j: usize| (xs[i * cols + j] - mean[j]) * inv_std[j];
                    if wants(gamma) {
                        let mut dg = vec![T::zero(); cols];
                        for i in 0..n {
                            for j in 0..cols {
                                dg[j] += g[i * cols + j] * xhat(i, j);
                            }
                        }
                        axpy(slot(&mut grads, *gamma), &dg, T::one());
                    }
                    if wants(beta) {
                        let buf = slot(&mut grads, *beta);
                        for chunk in g.chunks_exact(cols.max(1)) {
                            axpy(buf, chunk, T::one());
                        }
                    }
                    if wants(x) {
                        let gam = gam.to_vec();
                        let buf = slot(&mut grads, *x);
                        if *batch_stats {
                            let nf = T::of_f64(n as f64);
                            let mut s1 = vec![T::zero(); cols];
                            let mut s2 = vec![T::zero(); cols];
                            for i in 0..n {
                                for j in 0..cols {
                                    let gg = g[i * cols + j] * gam[j];
                                    s1[j] += gg;
                                    s2[j] += gg * xhat(i, j);
                                }
                            }
                            for i in 0..n {
                                for j in 0..cols {
                                    let gg = g[i * cols + j] * gam[j];
                                    buf[i * cols + j] += inv_std[j] / nf * (nf * gg - s1[j] - xhat(i, j) * s2[j]);
                                }
                            }
                        } else {
                            for i in 0..n {
                                for j in 0..cols {
                                    buf[i * cols + j] += g[i * cols + j] * gam[j] * inv_std[j];
                                }
                            }
                        }
                    }
                }
                Op::SoftmaxRows(a) => {
                    let cols = a.cols.max(1);
                    let p = &node.value;
                    let buf = slot(&mut grads, *a);
                    for ((gr, pr), dr) in g.chunks_exact(cols).zip(p.chunks_exact(cols)).zip(buf.chunks_exact_mut(cols)) {
                        let dot: T = gr.iter().zip(pr).map(|(&x, &y)| x * y).sum();
                        for ((d, &gi), &pi) in dr.iter_mut().zip(gr).zip(pr) {
                            *d += pi * (gi - dot);
                        }
                    }
                }
                Op::CrossEntropy { logits, labels, row_weights, total_weight } => {
                    if *total_weight > T::zero() {
                        let cols = logits.cols.max(1);
                        let scale = g[0] / *total_weight;
                        let mut probs = val(logits).to_vec();
                        let buf = slot(&mut grads, *logits);
                        for (i, (pr, dr)) in probs.chunks_exact_mut(cols).zip(buf.chunks_exact_mut(cols)).enumerate() {
                            softmax_in_place(pr);
                            pr[labels[i]] -= T::one();
                            let w = scale * row_weights[i];
                            for (d, &p) in dr.iter_mut().zip(pr.iter()) {
                                *d += w * p;
                            }
                        }
                    }
                }
                Op::Sum(a) => {
                    let buf = slot(&mut grads, *a);
                    buf.iter_mut().for_each(|d| *d += g[0]);
                }
            }
        }

        Ok(Gradients { grads })
    }
}

fn slot<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var) -> &mut Vec<T> {
    grads[v.id].get_or_insert_with(|| vec![T::zero(); v.len()])
}

fn axpy<T: Scalar>(dst: &mut [T], src: &[T], a: T) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += a * s;
    }
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v = *v / total;
    }
}

/// Gradients produced by one reverse pass, addressable by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss with respect to a tracked leaf; `None` when the
    /// loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.id).and_then(|g| g.as_deref())
    }

    /// Like [`Gradients::wrt`] but returns zeros for unreached leaves.
    pub fn wrt_or_zero(&self, v: Var) -> Tensor<T> {
        match self.wrt(v) {
            Some(g) => Tensor::new(v.rows, v.cols, g.to_vec()).expect("grad shape"),
            None => Tensor::zeros(v.rows, v.cols),
        }
    }
}
