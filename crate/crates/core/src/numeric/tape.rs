//! Reverse-mode gradient tape over dense matrices.
//!
//! Every forward op appends a node holding its value; `backward` walks the
//! nodes in reverse and accumulates adjoints into the parents that require
//! gradients. Values that are produced without a derivative rule are recorded
//! with [`Tape::opaque`]; back-propagating into one is an error.

use super::matrix::{l2_normalize_rows, softmax_rows, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    MulScalar(Var, Var),
    Exp(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    Clamp(Var, f64, f64),
    Transpose(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    L2NormalizeRows(Var),
    SoftmaxRows(Var),
    DiagCrossEntropy(Var),
    Sum(Var),
    Mean(Var),
    Opaque(String),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; zeros if `v` does not reach the loss.
    pub fn get(&self, v: Var) -> Matrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).scale(k);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, k), rg)
    }

    /// `a + row` with `row` (1 x n) broadcast over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (am, rm) = (self.value(a), self.value(row));
        if rm.rows() != 1 || rm.cols() != am.cols() {
            return Err(Error::Shape(format!(
                "add_row: {}x{} plus {}x{}",
                am.rows(),
                am.cols(),
                rm.rows(),
                rm.cols()
            )));
        }
        let mut value = am.clone();
        for r in 0..value.rows() {
            for (v, &b) in value.row_mut(r).iter_mut().zip(rm.data()) {
                *v += b;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(value, Op::AddRow(a, row), rg))
    }

    /// `a * s` for a 1 x 1 `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let sm = self.value(s);
        if sm.shape() != (1, 1) {
            return Err(Error::Shape(format!(
                "mul_scalar expects a 1x1 factor, got {}x{}",
                sm.rows(),
                sm.cols()
            )));
        }
        let k = sm.data()[0];
        let value = self.value(a).scale(k);
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(value, Op::MulScalar(a, s), rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, Op::Softplus(a))
    }

    /// Clamp to `[lo, hi]`; the gradient is zero wherever the clamp is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(value, Op::Transpose(a), rg)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).concat_cols(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::ConcatCols(a, b), rg))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let value = self.value(a).slice_cols(start, end)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::SliceCols(a, start), rg))
    }

    /// Row lookup with repeats; used for embeddings, broadcasting and length expansion.
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let value = self.value(a).gather_rows(indices)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::GatherRows(a, indices.to_vec()), rg))
    }

    pub fn l2_normalize_rows(&mut self, a: Var) -> Result<Var> {
        let value = l2_normalize_rows(self.value(a))?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::L2NormalizeRows(a), rg))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let value = softmax_rows(self.value(a))?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::SoftmaxRows(a), rg))
    }

    /// Mean over rows `i` of `-log softmax(row i)[i]`: cross-entropy with the
    /// positives on the diagonal.
    pub fn diag_cross_entropy(&mut self, logits: Var) -> Result<Var> {
        let m = self.value(logits);
        if m.rows() == 0 || m.rows() > m.cols() {
            return Err(Error::Shape(format!(
                "diagonal cross-entropy needs 1 <= rows <= cols, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        m.ensure_finite("logits")?;
        let mut total = 0.0;
        for (i, row) in m.iter_rows().enumerate() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[i];
        }
        let value = Matrix::scalar(total / m.rows() as f64);
        let rg = self.rg(logits);
        Ok(self.push(value, Op::DiagCrossEntropy(logits), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let value = Matrix::scalar(m.sum() / m.len().max(1) as f64);
        let rg = self.rg(a);
        self.push(value, Op::Mean(a), rg)
    }

    /// Records a value computed outside the tape from `inputs`. It has no
    /// derivative: `backward` fails if the loss depends on it through a
    /// differentiable input.
    pub fn opaque(&mut self, name: &str, inputs: &[Var], value: Matrix) -> Var {
        let rg = inputs.iter().any(|&v| self.rg(v));
        self.push(value, Op::Opaque(name.to_string()), rg)
    }

    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got {}x{}",
                lv.rows(),
                lv.cols()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) -> Result<()> {
        if !self.rg(v) {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g)?,
            slot @ None => *slot = Some(g),
        }
        Ok(())
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    let ga = g.matmul(&self.value(*b).transpose())?;
                    self.accumulate(grads, *a, ga)?;
                }
                if self.rg(*b) {
                    let gb = self.value(*a).transpose().matmul(g)?;
                    self.accumulate(grads, *b, gb)?;
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone())?;
                self.accumulate(grads, *b, g.clone())?;
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone())?;
                self.accumulate(grads, *b, g.scale(-1.0))?;
            }
            Op::Mul(a, b) => {
                let ga = g.zip_map(self.value(*b), |d, v| d * v)?;
                let gb = g.zip_map(self.value(*a), |d, v| d * v)?;
                self.accumulate(grads, *a, ga)?;
                self.accumulate(grads, *b, gb)?;
            }
            Op::Scale(a, k) => self.accumulate(grads, *a, g.scale(*k))?,
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, g.clone())?;
                if self.rg(*row) {
                    let mut gr = Matrix::zeros(1, g.cols());
                    for r in g.iter_rows() {
                        for (acc, &v) in gr.data_mut().iter_mut().zip(r) {
                            *acc += v;
                        }
                    }
                    self.accumulate(grads, *row, gr)?;
                }
            }
            Op::MulScalar(a, s) => {
                let k = self.value(*s).data()[0];
                self.accumulate(grads, *a, g.scale(k))?;
                if self.rg(*s) {
                    let ds: f64 = g
                        .data()
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(d, v)| d * v)
                        .sum();
                    self.accumulate(grads, *s, Matrix::scalar(ds))?;
                }
            }
            Op::Exp(a) => self.accumulate(grads, *a, g.zip_map(y, |d, v| d * v)?)?,
            Op::Tanh(a) => self.accumulate(grads, *a, g.zip_map(y, |d, v| d * (1.0 - v * v))?)?,
            Op::Sigmoid(a) => {
                self.accumulate(grads, *a, g.zip_map(y, |d, v| d * v * (1.0 - v))?)?
            }
            Op::Softplus(a) => {
                let ga = g.zip_map(self.value(*a), |d, x| d * sigmoid(x))?;
                self.accumulate(grads, *a, ga)?
            }
            Op::Clamp(a, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                let ga = g.zip_map(self.value(*a), |d, x| if x > lo && x < hi { d } else { 0.0 })?;
                self.accumulate(grads, *a, ga)?
            }
            Op::Transpose(a) => self.accumulate(grads, *a, g.transpose())?,
            Op::ConcatCols(a, b) => {
                let split = self.value(*a).cols();
                self.accumulate(grads, *a, g.slice_cols(0, split)?)?;
                self.accumulate(grads, *b, g.slice_cols(split, g.cols())?)?;
            }
            Op::SliceCols(a, start) => {
                let src = self.value(*a);
                let mut ga = Matrix::zeros(src.rows(), src.cols());
                for r in 0..g.rows() {
                    ga.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                self.accumulate(grads, *a, ga)?;
            }
            Op::GatherRows(a, indices) => {
                let src = self.value(*a);
                let mut ga = Matrix::zeros(src.rows(), src.cols());
                for (r, &i) in indices.iter().enumerate() {
                    for (acc, &v) in ga.row_mut(i).iter_mut().zip(g.row(r)) {
                        *acc += v;
                    }
                }
                self.accumulate(grads, *a, ga)?;
            }
            Op::L2NormalizeRows(a) => {
                let x = self.value(*a);
                let mut ga = Matrix::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    let n = super::matrix::norm(x.row(r));
                    let (yr, gr) = (y.row(r), g.row(r));
                    let proj = super::matrix::dot(yr, gr);
                    for ((o, &yv), &gv) in ga.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *o = (gv - yv * proj) / n;
                    }
                }
                self.accumulate(grads, *a, ga)?;
            }
            Op::SoftmaxRows(a) => {
                let mut ga = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let inner = super::matrix::dot(yr, gr);
                    for ((o, &yv), &gv) in ga.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *o = yv * (gv - inner);
                    }
                }
                self.accumulate(grads, *a, ga)?;
            }
            Op::DiagCrossEntropy(a) => {
                let x = self.value(*a);
                let k = x.rows() as f64;
                let d = g.data()[0];
                let mut ga = softmax_rows(x)?;
                for r in 0..ga.rows() {
                    let row = ga.row_mut(r);
                    row[r] -= 1.0;
                    for v in row.iter_mut() {
                        *v *= d / k;
                    }
                }
                self.accumulate(grads, *a, ga)?;
            }
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                self.accumulate(grads, *a, Matrix::filled(r, c, g.data()[0]))?;
            }
            Op::Mean(a) => {
                let (r, c) = self.value(*a).shape();
                let n = (r * c).max(1) as f64;
                self.accumulate(grads, *a, Matrix::filled(r, c, g.data()[0] / n))?;
            }
            Op::Opaque(name) => return Err(Error::UnsupportedOp(name.clone())),
        }
        Ok(())
    }
}
