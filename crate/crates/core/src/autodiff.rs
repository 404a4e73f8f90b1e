//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every primitive applied to its [`Var`]s during one
//! forward pass. [`Tape::backward`] walks the record in reverse and returns
//! a fresh [`Gradients`] table, so gradients start from zero on every call.
//! A tape lives for one forward/backward pass and is then dropped.
//!
//! ```
//! use ham_core::autodiff::Tape;
//! use ham_core::tensor::Tensor;
//!
//! let tape = Tape::new();
//! let x = tape.leaf(Tensor::vector(vec![1.0, -2.0]));
//! let loss = x.dot(x).unwrap().scale(0.5);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(x).data(), &[1.0, -2.0]);
//! ```

use std::cell::RefCell;

use crate::error::{dim_err, domain, Error, Result};
use crate::tensor::{dot_slices, matmul_into, softmax_slice, Tensor};

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    AddRow(usize, usize),
    MatMul(usize, usize),
    Bmm(usize, usize),
    MatVec(usize, usize),
    VecMat(usize, usize),
    Transpose(usize),
    Reshape(usize),
    Tanh(usize),
    Sigmoid(usize),
    Softmax(usize),
    Concat(Vec<usize>),
    Dot(usize, usize),
    Sum(usize),
    GatherRows(usize, Vec<usize>),
    Stack(Vec<usize>, usize),
    CrossEntropy(usize, Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Ordered record of the primitives evaluated in one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

/// Gradients of one scalar loss with respect to every recorded node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to `var`; zeros if `var` does not reach the loss.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        match &self.grads[var.id] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[var.id]),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// Registers an input. Trainable parameters and constants are both leaves.
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    fn with_value<T>(&self, id: usize, f: impl FnOnce(&Tensor) -> T) -> T {
        f(&self.nodes.borrow()[id].value)
    }

    /// Concatenates along the last axis. All parts must agree on leading axes.
    pub fn concat<'t>(&'t self, parts: &[Var<'t>]) -> Result<Var<'t>> {
        let Some(first) = parts.first() else {
            return domain("concat of zero tensors");
        };
        let nodes = self.nodes.borrow();
        let lead = &nodes[first.id].value.shape()[..nodes[first.id].value.rank() - 1];
        let outer: usize = lead.iter().product();
        let mut width = 0;
        for p in parts {
            let s = nodes[p.id].value.shape();
            if &s[..s.len() - 1] != lead {
                return dim_err("concat", nodes[first.id].value.shape(), s);
            }
            width += s[s.len() - 1];
        }
        let mut data = Vec::with_capacity(outer * width);
        for o in 0..outer {
            for p in parts {
                let v = &nodes[p.id].value;
                let c = v.cols();
                data.extend_from_slice(&v.data()[o * c..(o + 1) * c]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(width);
        drop(nodes);
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Concat(parts.iter().map(|p| p.id).collect())))
    }

    /// Stacks equally shaped tensors along a new axis inserted at `axis`.
    pub fn stack<'t>(&'t self, parts: &[Var<'t>], axis: usize) -> Result<Var<'t>> {
        let Some(first) = parts.first() else {
            return domain("stack of zero tensors");
        };
        let nodes = self.nodes.borrow();
        let shape = nodes[first.id].value.shape().to_vec();
        if axis > shape.len() {
            return domain(format!("stack axis {axis} out of range for rank {}", shape.len()));
        }
        for p in parts {
            if nodes[p.id].value.shape() != shape.as_slice() {
                return dim_err("stack", &shape, nodes[p.id].value.shape());
            }
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis..].iter().product();
        let mut data = Vec::with_capacity(outer * inner * parts.len());
        for o in 0..outer {
            for p in parts {
                data.extend_from_slice(&nodes[p.id].value.data()[o * inner..(o + 1) * inner]);
            }
        }
        let mut out_shape = shape.clone();
        out_shape.insert(axis, parts.len());
        drop(nodes);
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(value, Op::Stack(parts.iter().map(|p| p.id).collect(), axis)))
    }

    /// Reverse pass from a one-element `loss`.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let loss_value = &nodes[loss.id].value;
        if loss_value.numel() != 1 {
            return domain(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_value.shape()
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::ones(loss_value.shape()));

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            let val = |i: usize| &nodes[i].value;
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.scale(-1.0));
                }
                Op::Mul(a, b) => {
                    accumulate(&mut grads, *a, g.hadamard(val(*b))?);
                    accumulate(&mut grads, *b, g.hadamard(val(*a))?);
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, g.scale(*s)),
                Op::AddScalar(a) => accumulate(&mut grads, *a, g.clone()),
                Op::AddRow(m, b) => {
                    let c = g.cols();
                    let mut gb = vec![0.0; c];
                    for chunk in g.data().chunks(c) {
                        for (acc, v) in gb.iter_mut().zip(chunk) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads, *m, g.clone());
                    accumulate(&mut grads, *b, Tensor::vector(gb));
                }
                Op::MatMul(a, b) => {
                    accumulate(&mut grads, *a, g.matmul(&val(*b).transpose()?)?);
                    accumulate(&mut grads, *b, val(*a).transpose()?.matmul(&g)?);
                }
                Op::Bmm(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let (batch, m, k) = (av.shape()[0], av.shape()[1], av.shape()[2]);
                    let n = bv.shape()[2];
                    let mut ga = vec![0.0; batch * m * k];
                    let mut gb = vec![0.0; batch * k * n];
                    for s in 0..batch {
                        let a_s = &av.data()[s * m * k..(s + 1) * m * k];
                        let b_s = &bv.data()[s * k * n..(s + 1) * k * n];
                        let g_s = &g.data()[s * m * n..(s + 1) * m * n];
                        for i in 0..m {
                            for p in 0..k {
                                let mut acc = 0.0;
                                for j in 0..n {
                                    acc += g_s[i * n + j] * b_s[p * n + j];
                                    gb[s * k * n + p * n + j] += a_s[i * k + p] * g_s[i * n + j];
                                }
                                ga[s * m * k + i * k + p] = acc;
                            }
                        }
                    }
                    accumulate(&mut grads, *a, Tensor::new(av.shape().to_vec(), ga)?);
                    accumulate(&mut grads, *b, Tensor::new(bv.shape().to_vec(), gb)?);
                }
                Op::MatVec(m, v) => {
                    let (mv, vv) = (val(*m), val(*v));
                    let (rows, cols) = (mv.rows(), mv.cols());
                    let mut gm = vec![0.0; rows * cols];
                    for i in 0..rows {
                        for j in 0..cols {
                            gm[i * cols + j] = g.data()[i] * vv.data()[j];
                        }
                    }
                    accumulate(&mut grads, *m, Tensor::new(vec![rows, cols], gm)?);
                    accumulate(&mut grads, *v, mv.transpose()?.matvec(&g)?);
                }
                Op::VecMat(v, m) => {
                    let (vv, mv) = (val(*v), val(*m));
                    let (rows, cols) = (mv.rows(), mv.cols());
                    let mut gm = vec![0.0; rows * cols];
                    for i in 0..rows {
                        for j in 0..cols {
                            gm[i * cols + j] = vv.data()[i] * g.data()[j];
                        }
                    }
                    accumulate(&mut grads, *v, mv.matvec(&g)?);
                    accumulate(&mut grads, *m, Tensor::new(vec![rows, cols], gm)?);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()?),
                Op::Reshape(a) => accumulate(&mut grads, *a, g.reshape(val(*a).shape())?),
                Op::Tanh(a) => {
                    let d = g.hadamard(&node.value.map(|y| 1.0 - y * y))?;
                    accumulate(&mut grads, *a, d);
                }
                Op::Sigmoid(a) => {
                    let d = g.hadamard(&node.value.map(|y| y * (1.0 - y)))?;
                    accumulate(&mut grads, *a, d);
                }
                Op::Softmax(a) => {
                    // Jacobian action (diag(p) - p pᵀ) g, row by row.
                    let p = &node.value;
                    let c = p.cols();
                    let mut out = Vec::with_capacity(p.numel());
                    for (pr, gr) in p.data().chunks(c).zip(g.data().chunks(c)) {
                        let inner = dot_slices(pr, gr);
                        out.extend(pr.iter().zip(gr).map(|(pi, gi)| pi * (gi - inner)));
                    }
                    accumulate(&mut grads, *a, Tensor::new(p.shape().to_vec(), out)?);
                }
                Op::Concat(parts) => {
                    let width = g.cols();
                    let outer = g.numel() / width;
                    let mut offset = 0;
                    for &p in parts {
                        let pv = val(p);
                        let c = pv.cols();
                        let mut part = Vec::with_capacity(pv.numel());
                        for o in 0..outer {
                            part.extend_from_slice(&g.data()[o * width + offset..o * width + offset + c]);
                        }
                        offset += c;
                        accumulate(&mut grads, p, Tensor::new(pv.shape().to_vec(), part)?);
                    }
                }
                Op::Dot(a, b) => {
                    let s = g.data()[0];
                    accumulate(&mut grads, *a, val(*b).scale(s));
                    accumulate(&mut grads, *b, val(*a).scale(s));
                }
                Op::Sum(a) => {
                    accumulate(&mut grads, *a, Tensor::filled(val(*a).shape(), g.data()[0]));
                }
                Op::GatherRows(table, ids) => {
                    let tv = val(*table);
                    let c = tv.cols();
                    let mut gt = Tensor::zeros(tv.shape());
                    for (r, &id) in ids.iter().enumerate() {
                        let dst = &mut gt.data_mut()[id * c..(id + 1) * c];
                        for (d, s) in dst.iter_mut().zip(&g.data()[r * c..(r + 1) * c]) {
                            *d += s;
                        }
                    }
                    accumulate(&mut grads, *table, gt);
                }
                Op::Stack(parts, axis) => {
                    let shape = val(parts[0]).shape();
                    let outer: usize = shape[..*axis].iter().product();
                    let inner: usize = shape[*axis..].iter().product();
                    let k = parts.len();
                    for (idx, &p) in parts.iter().enumerate() {
                        let mut part = Vec::with_capacity(outer * inner);
                        for o in 0..outer {
                            let start = (o * k + idx) * inner;
                            part.extend_from_slice(&g.data()[start..start + inner]);
                        }
                        accumulate(&mut grads, p, Tensor::new(shape.to_vec(), part)?);
                    }
                }
                Op::CrossEntropy(logits, targets) => {
                    let lv = val(*logits);
                    let c = lv.cols();
                    let scale = g.data()[0] / targets.len() as f64;
                    let mut out = Vec::with_capacity(lv.numel());
                    for (row, &t) in lv.data().chunks(c).zip(targets) {
                        let mut p = softmax_slice(row);
                        p[t] -= 1.0;
                        out.extend(p.into_iter().map(|v| v * scale));
                    }
                    accumulate(&mut grads, *logits, Tensor::new(lv.shape().to_vec(), out)?);
                }
            }
            grads[id] = Some(g);
        }

        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: usize, g: Tensor) {
    match &mut grads[id] {
        Some(acc) => {
            for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += v;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

// arithmetic methods return Result, so the operator traits do not fit
#[allow(clippy::should_implement_trait)]
impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Tensor {
        self.tape.with_value(self.id, Tensor::clone)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.with_value(self.id, |v| v.shape().to_vec())
    }

    fn same_tape(&self, other: Var<'t>) {
        assert!(std::ptr::eq(self.tape, other.tape), "vars from different tapes");
    }

    fn binary(
        self,
        other: Var<'t>,
        op: fn(usize, usize) -> Op,
        f: impl FnOnce(&Tensor, &Tensor) -> Result<Tensor>,
    ) -> Result<Var<'t>> {
        self.same_tape(other);
        let value = {
            let nodes = self.tape.nodes.borrow();
            f(&nodes[self.id].value, &nodes[other.id].value)?
        };
        Ok(self.tape.push(value, op(self.id, other.id)))
    }

    fn unary(self, op: Op, f: impl FnOnce(&Tensor) -> Result<Tensor>) -> Result<Var<'t>> {
        let value = self.tape.with_value(self.id, f)?;
        Ok(self.tape.push(value, op))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Add, Tensor::add)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Sub, Tensor::sub)
    }

    /// Element-wise product.
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Mul, Tensor::hadamard)
    }

    pub fn scale(self, s: f64) -> Var<'t> {
        let value = self.tape.with_value(self.id, |v| v.scale(s));
        self.tape.push(value, Op::Scale(self.id, s))
    }

    pub fn add_scalar(self, s: f64) -> Var<'t> {
        let value = self.tape.with_value(self.id, |v| v.map(|x| x + s));
        self.tape.push(value, Op::AddScalar(self.id))
    }

    /// Adds the vector `bias` to every slice along the last axis.
    pub fn add_row(self, bias: Var<'t>) -> Result<Var<'t>> {
        self.binary(bias, Op::AddRow, |m, b| {
            if b.rank() != 1 || b.numel() != m.cols() {
                return dim_err("add_row", m.shape(), b.shape());
            }
            let c = m.cols();
            let mut out = m.clone();
            for chunk in out.data_mut().chunks_mut(c) {
                for (o, bv) in chunk.iter_mut().zip(b.data()) {
                    *o += bv;
                }
            }
            Ok(out)
        })
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::MatMul, Tensor::matmul)
    }

    /// Batched matrix product `[B×m×k] · [B×k×n] -> [B×m×n]`.
    pub fn bmm(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Bmm, |a, b| {
            let (sa, sb) = (a.shape(), b.shape());
            if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
                return dim_err("bmm", sa, sb);
            }
            let (batch, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
            let mut out = vec![0.0; batch * m * n];
            for s in 0..batch {
                matmul_into(
                    &a.data()[s * m * k..(s + 1) * m * k],
                    &b.data()[s * k * n..(s + 1) * k * n],
                    &mut out[s * m * n..(s + 1) * m * n],
                    m,
                    k,
                    n,
                );
            }
            Tensor::new(vec![batch, m, n], out)
        })
    }

    pub fn matvec(self, v: Var<'t>) -> Result<Var<'t>> {
        self.binary(v, Op::MatVec, Tensor::matvec)
    }

    /// Row vector times matrix, `vᵀ M`.
    pub fn vecmat(self, m: Var<'t>) -> Result<Var<'t>> {
        self.binary(m, Op::VecMat, |v, m| {
            if m.rank() != 2 || v.rank() != 1 || v.numel() != m.rows() {
                return dim_err("vecmat", v.shape(), m.shape());
            }
            m.transpose()?.matvec(v)
        })
    }

    pub fn transpose(self) -> Result<Var<'t>> {
        self.unary(Op::Transpose(self.id), Tensor::transpose)
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        self.unary(Op::Reshape(self.id), |v| v.reshape(shape))
    }

    pub fn tanh(self) -> Var<'t> {
        let value = self.tape.with_value(self.id, |v| v.map(f64::tanh));
        self.tape.push(value, Op::Tanh(self.id))
    }

    pub fn sigmoid(self) -> Var<'t> {
        let value = self.tape.with_value(self.id, |v| v.map(sigmoid));
        self.tape.push(value, Op::Sigmoid(self.id))
    }

    /// Softmax along the last axis.
    pub fn softmax(self) -> Var<'t> {
        let value = self.tape.with_value(self.id, Tensor::softmax_last);
        self.tape.push(value, Op::Softmax(self.id))
    }

    pub fn dot(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Dot, |a, b| a.dot(b).map(Tensor::scalar))
    }

    pub fn sum(self) -> Var<'t> {
        let value = self.tape.with_value(self.id, |v| Tensor::scalar(v.sum()));
        self.tape.push(value, Op::Sum(self.id))
    }

    /// Selects rows of a matrix, e.g. an embedding lookup.
    pub fn gather_rows(self, ids: &[usize]) -> Result<Var<'t>> {
        let owned = ids.to_vec();
        self.unary(Op::GatherRows(self.id, owned), |t| {
            if t.rank() != 2 {
                return domain(format!("gather_rows on shape {:?}", t.shape()));
            }
            if ids.is_empty() {
                return domain("gather_rows with no ids");
            }
            let c = t.cols();
            let mut data = Vec::with_capacity(ids.len() * c);
            for &id in ids {
                if id >= t.rows() {
                    return domain(format!("row id {id} out of range for {} rows", t.rows()));
                }
                data.extend_from_slice(&t.data()[id * c..(id + 1) * c]);
            }
            Tensor::new(vec![ids.len(), c], data)
        })
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `self` (`[B×V]` logits, one target per row).
    pub fn cross_entropy(self, targets: &[usize]) -> Result<Var<'t>> {
        let owned = targets.to_vec();
        self.unary(Op::CrossEntropy(self.id, owned), |l| {
            if l.rank() != 2 || l.rows() != targets.len() {
                return dim_err("cross_entropy", l.shape(), &[targets.len()]);
            }
            let c = l.cols();
            let mut total = 0.0;
            for (row, &t) in l.data().chunks(c).zip(targets) {
                if t >= c {
                    return domain(format!("target {t} out of range for {c} classes"));
                }
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                total += lse - row[t];
            }
            let loss = total / targets.len() as f64;
            if !loss.is_finite() {
                return Err(Error::NonFinite("cross-entropy loss".into()));
            }
            Ok(Tensor::scalar(loss))
        })
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Outcome of a finite-difference comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    /// max over coordinates of |analytic − numeric| / max(1, |analytic|)
    pub max_rel_error: f64,
    /// (input index, flat coordinate) where the maximum occurred
    pub worst: (usize, usize),
}

/// Compares reverse-mode gradients of a scalar function of several inputs
/// against central differences with step `h`.
pub fn grad_check_all<F>(f: F, inputs: &[Tensor], h: f64) -> Result<GradCheck>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&tape, &vars)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.wrt(v)).collect();

    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        f(&tape, &vars)?.value().item()
    };

    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: (0, 0),
    };
    let mut probe = inputs.to_vec();
    for (idx, input) in inputs.iter().enumerate() {
        for coord in 0..input.numel() {
            let x0 = input.data()[coord];
            probe[idx].data_mut()[coord] = x0 + h;
            let plus = eval(&probe)?;
            probe[idx].data_mut()[coord] = x0 - h;
            let minus = eval(&probe)?;
            probe[idx].data_mut()[coord] = x0;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[idx].data()[coord];
            let err = (a - numeric).abs() / a.abs().max(1.0);
            if err > report.max_rel_error || err.is_nan() {
                report.max_rel_error = err;
                report.worst = (idx, coord);
            }
        }
    }
    Ok(report)
}

/// Single-input form of [`grad_check_all`], returning the max relative error.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    grad_check_all(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), h).map(|r| r.max_rel_error)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_sum_has_unit_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.3, -1.0, 2.0]));
        let g = tape.backward(x.sum()).unwrap();
        assert_eq!(g.wrt(x), Tensor::ones(&[3]));
    }

    #[test]
    fn half_squared_norm_gradient_is_identity() {
        let tape = Tape::new();
        let xv = Tensor::vector(vec![0.5, -1.5, 4.0]);
        let x = tape.leaf(xv.clone());
        let loss = x.mul(x).unwrap().sum().scale(0.5);
        assert_eq!(tape.backward(loss).unwrap().wrt(x), xv);
    }

    #[test]
    fn softmax_first_entry_gradient() {
        // central differences at h = 1e-5 give [0.25, -0.25]
        let e0 = Tensor::vector(vec![1.0, 0.0]);
        let tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[2]));
        let sel = tape.leaf(e0);
        let loss = x.softmax().dot(sel).unwrap();
        let g = tape.backward(loss).unwrap().wrt(x);
        assert!((g.data()[0] - 0.25).abs() < 1e-15);
        assert!((g.data()[1] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[2]));
        assert!(matches!(tape.backward(x.tanh()), Err(Error::Domain(_))));
    }

    #[test]
    fn fan_out_accumulates_exactly() {
        let xv = Tensor::vector(vec![0.1, 0.7, -0.4]);
        let grad_of = |which: u8| {
            let tape = Tape::new();
            let x = tape.leaf(xv.clone());
            let f = x.tanh().sum();
            let g = x.sigmoid().dot(x).unwrap();
            let loss = match which {
                0 => f,
                1 => g,
                _ => f.add(g).unwrap(),
            };
            tape.backward(loss).unwrap().wrt(x)
        };
        let both = grad_of(2);
        let sum = grad_of(0).add(&grad_of(1)).unwrap();
        assert_eq!(both, sum);
    }

    #[test]
    fn repeated_backward_is_bitwise_identical() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.2, -0.9]));
        let loss = x.softmax().tanh().sum();
        let a = tape.backward(loss).unwrap().wrt(x);
        let b = tape.backward(loss).unwrap().wrt(x);
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn grad_check_quadratic_and_constant() {
        let x = Tensor::vector(vec![1.5, -0.25, 3.0]);
        let err = grad_check(|_, v| v.dot(v), &x, 1e-5).unwrap();
        assert!(err < 1e-8, "{err}");
        let err = grad_check(|t, _| Ok(t.leaf(Tensor::scalar(4.0))), &x, 1e-5).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn unused_leaf_gradient_is_zero() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::ones(&[2, 2]));
        let y = tape.leaf(Tensor::ones(&[3]));
        let g = tape.backward(y.sum()).unwrap();
        assert_eq!(g.wrt(x), Tensor::zeros(&[2, 2]));
    }
}
