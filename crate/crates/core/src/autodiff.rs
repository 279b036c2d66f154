//! Define-by-run reverse-mode automatic differentiation over dense `f64`
//! tensors.
//!
//! A [`Tape`] is an arena of nodes. Every operation appends a node holding
//! its forward value and a record of its inputs; [`Tape::backward`] replays
//! the records in reverse order and accumulates gradients into every node
//! that requires them. A tape is built fresh for each optimizer step.
//!
//! ```
//! use colearn::autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let w = tape.leaf(Tensor::from_vec(vec![2], vec![1.0, -2.0]).unwrap(), true);
//! let sq = tape.mul(w, w).unwrap();
//! let loss = tape.sum(sq, None).unwrap();
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(w).unwrap(), &[2.0, -4.0]);
//! ```

use crate::error::{Error, Result};

/// Row norms at or below this are treated as degenerate.
pub const NORM_EPS: f64 = 1e-12;

/// Dense row-major tensor value.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Dimension(format!(
                "shape {:?} holds {} elements but {} were given",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor { shape, data: vec![0.0; numel] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![], data: vec![value] }
    }

    /// Builds an `rows × cols` matrix from nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Tensor::from_vec(vec![rows.len(), cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    /// `(rows, cols)` of a 2-D tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::Dimension(format!("expected a matrix, got shape {s:?}"))),
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let cols = *self.shape.last().unwrap_or(&1);
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    Sum,
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Exp,
    Log,
    Relu,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Binary(Binary, Var, Var),
    AddRow(Var, Var),
    Affine { input: Var, scale: f64 },
    Unary(Unary, Var),
    Reduce { kind: Reduce, input: Var, axis: Option<usize> },
    L2Normalize(Var),
    LogSoftmax(Var),
    ConcatRows(Vec<Var>),
    PairwiseSqDist(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

/// Recorded forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds an input tensor. Parameters pass `requires_grad = true`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, grad: None, requires_grad, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of `v`, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Resets every gradient buffer to zeros.
    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            if node.requires_grad {
                let n = node.value.numel();
                match &mut node.grad {
                    Some(g) => g.iter_mut().for_each(|x| *x = 0.0),
                    None => node.grad = Some(vec![0.0; n]),
                }
            }
        }
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var], name: &str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, grad: None, requires_grad, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(Error::Dimension(format!("matmul {m}x{k} by {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, &mut out, false);
        self.push(Tensor { shape: vec![m, n], data: out }, Op::MatMul(a, b), &[a, b], "matmul")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.value(a).dims2()?;
        let src = self.value(a).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        self.push(Tensor { shape: vec![c, r], data: out }, Op::Transpose(a), &[a], "transpose")
    }

    /// Elementwise binary op; operand shapes must match unless one of them
    /// holds a single element.
    pub fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = if ta.shape() == tb.shape() || tb.numel() == 1 {
            ta.shape().to_vec()
        } else if ta.numel() == 1 {
            tb.shape().to_vec()
        } else {
            return Err(Error::Dimension(format!(
                "elementwise {:?} on shapes {:?} and {:?}",
                kind,
                ta.shape(),
                tb.shape()
            )));
        };
        let n: usize = shape.iter().product();
        let (da, db) = (ta.data(), tb.data());
        let f = |x: f64, y: f64| match kind {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
        };
        let out: Vec<f64> = (0..n).map(|i| f(da[bidx(i, da.len())], db[bidx(i, db.len())])).collect();
        self.push(Tensor { shape, data: out }, Op::Binary(kind, a, b), &[a, b], "elementwise")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    /// Adds a length-`n` row vector to every row of an `m × n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.value(a).dims2()?;
        if self.value(row).numel() != n {
            return Err(Error::Dimension(format!(
                "row of {} elements added to {m}x{n}",
                self.value(row).numel()
            )));
        }
        let r = self.value(row).data();
        let out: Vec<f64> = self.value(a).data().iter().enumerate().map(|(i, x)| x + r[i % n]).collect();
        self.push(Tensor { shape: vec![m, n], data: out }, Op::AddRow(a, row), &[a, row], "add_row")
    }

    /// `scale · a + offset`.
    pub fn affine(&mut self, a: Var, scale: f64, offset: f64) -> Result<Var> {
        let t = self.value(a);
        let out = t.data().iter().map(|x| scale * x + offset).collect();
        let shape = t.shape().to_vec();
        self.push(Tensor { shape, data: out }, Op::Affine { input: a, scale }, &[a], "affine")
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.affine(a, factor, 0.0)
    }

    pub fn unary(&mut self, kind: Unary, a: Var) -> Result<Var> {
        let t = self.value(a);
        if kind == Unary::Log {
            if let Some(bad) = t.data().iter().find(|&&x| x <= 0.0) {
                return Err(Error::Domain(format!("log of non-positive value {bad}")));
            }
        }
        let out = t
            .data()
            .iter()
            .map(|&x| match kind {
                Unary::Exp => x.exp(),
                Unary::Log => x.ln(),
                Unary::Relu => x.max(0.0),
            })
            .collect();
        let shape = t.shape().to_vec();
        self.push(Tensor { shape, data: out }, Op::Unary(kind, a), &[a], "unary")
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Exp, a)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Log, a)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Relu, a)
    }

    /// `max(a, floor)` built from relu so the gradient is the relu rule.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Result<Var> {
        let shifted = self.affine(a, 1.0, -floor)?;
        let r = self.relu(shifted)?;
        self.affine(r, 1.0, floor)
    }

    /// Sum or mean over all elements (`axis = None`) or along one axis.
    pub fn reduce(&mut self, kind: Reduce, a: Var, axis: Option<usize>) -> Result<Var> {
        let t = self.value(a);
        let (shape, out) = match axis {
            None => {
                let s: f64 = t.data().iter().sum();
                let v = match kind {
                    Reduce::Sum => s,
                    Reduce::Mean => s / t.numel().max(1) as f64,
                };
                (vec![], vec![v])
            }
            Some(ax) => {
                if ax >= t.shape().len() {
                    return Err(Error::Dimension(format!(
                        "axis {ax} out of range for shape {:?}",
                        t.shape()
                    )));
                }
                let (outer, len, inner) = split_axis(t.shape(), ax);
                let mut out = vec![0.0; outer * inner];
                for o in 0..outer {
                    for l in 0..len {
                        let base = (o * len + l) * inner;
                        for i in 0..inner {
                            out[o * inner + i] += t.data()[base + i];
                        }
                    }
                }
                if kind == Reduce::Mean && len > 0 {
                    out.iter_mut().for_each(|x| *x /= len as f64);
                }
                let mut shape = t.shape().to_vec();
                shape.remove(ax);
                (shape, out)
            }
        };
        self.push(Tensor { shape, data: out }, Op::Reduce { kind, input: a, axis }, &[a], "reduce")
    }

    pub fn sum(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        self.reduce(Reduce::Sum, a, axis)
    }

    pub fn mean(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        self.reduce(Reduce::Mean, a, axis)
    }

    /// Divides each row by its Euclidean norm.
    pub fn l2_normalize(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (n, d) = t.dims2()?;
        let mut out = t.data().to_vec();
        for i in 0..n {
            let row = &mut out[i * d..(i + 1) * d];
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm <= NORM_EPS {
                return Err(Error::Degenerate(format!("row {i} has norm {norm:e}")));
            }
            row.iter_mut().for_each(|x| *x /= norm);
        }
        self.push(Tensor { shape: vec![n, d], data: out }, Op::L2Normalize(a), &[a], "l2_normalize")
    }

    /// Row-wise log-softmax with max subtraction.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (n, c) = t.dims2()?;
        let mut out = t.data().to_vec();
        for i in 0..n {
            let row = &mut out[i * c..(i + 1) * c];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|x| *x -= lse);
        }
        self.push(Tensor { shape: vec![n, c], data: out }, Op::LogSoftmax(a), &[a], "log_softmax")
    }

    /// Stacks matrices with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::Dimension("concat of nothing".into()))?;
        let (_, c) = self.value(*first).dims2()?;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let (r, c2) = self.value(*p).dims2()?;
            if c2 != c {
                return Err(Error::Dimension(format!("concat of {c2} columns onto {c}")));
            }
            rows += r;
            data.extend_from_slice(self.value(*p).data());
        }
        self.push(Tensor { shape: vec![rows, c], data }, Op::ConcatRows(parts.to_vec()), parts, "concat_rows")
    }

    /// `out[i][j] = ‖a_i − a_j‖²` over the rows of `a`.
    pub fn pairwise_sq_dist(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (n, _) = t.dims2()?;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let s: f64 = t.row(i).iter().zip(t.row(j)).map(|(x, y)| (x - y) * (x - y)).sum();
                out[i * n + j] = s;
                out[j * n + i] = s;
            }
        }
        self.push(Tensor { shape: vec![n, n], data: out }, Op::PairwiseSqDist(a), &[a], "pairwise_sq_dist")
    }

    /// Accumulates `∂loss/∂v` into every node that requires a gradient.
    /// Calling this twice without [`Tape::zero_grad`] adds the gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            self.propagate(idx, &g, &mut grads);
            let node = &mut self.nodes[idx];
            match &mut node.grad {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2().expect("matmul operand");
                let n = out.shape()[1];
                if self.requires_grad(*a) {
                    let ga = self.slot(grads, *a);
                    gemm(m, n, k, g, false, self.value(*b).data(), true, ga, true);
                }
                if self.requires_grad(*b) {
                    let gb = self.slot(grads, *b);
                    gemm(k, m, n, self.value(*a).data(), true, g, false, gb, true);
                }
            }
            Op::Transpose(a) => {
                let (r, c) = self.value(*a).dims2().expect("transpose operand");
                let ga = self.slot(grads, *a);
                for i in 0..r {
                    for j in 0..c {
                        ga[i * c + j] += g[j * r + i];
                    }
                }
            }
            Op::Binary(kind, a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let (la, lb) = (va.len(), vb.len());
                if self.requires_grad(*a) {
                    let ga = self.slot(grads, *a);
                    for (i, gi) in g.iter().enumerate() {
                        ga[bidx(i, la)] += match kind {
                            Binary::Add | Binary::Sub => *gi,
                            Binary::Mul => gi * vb[bidx(i, lb)],
                        };
                    }
                }
                if self.requires_grad(*b) {
                    let gb = self.slot(grads, *b);
                    for (i, gi) in g.iter().enumerate() {
                        gb[bidx(i, lb)] += match kind {
                            Binary::Add => *gi,
                            Binary::Sub => -gi,
                            Binary::Mul => gi * va[bidx(i, la)],
                        };
                    }
                }
            }
            Op::AddRow(a, row) => {
                let n = out.shape()[1];
                if self.requires_grad(*a) {
                    let ga = self.slot(grads, *a);
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
                if self.requires_grad(*row) {
                    let gr = self.slot(grads, *row);
                    for (i, gi) in g.iter().enumerate() {
                        gr[i % n] += gi;
                    }
                }
            }
            Op::Affine { input, scale } => {
                let ga = self.slot(grads, *input);
                ga.iter_mut().zip(g).for_each(|(x, y)| *x += scale * y);
            }
            Op::Unary(kind, a) => {
                let x = self.value(*a).data();
                let ga = self.slot(grads, *a);
                for i in 0..g.len() {
                    ga[i] += match kind {
                        Unary::Exp => g[i] * out.data()[i],
                        Unary::Log => g[i] / x[i],
                        Unary::Relu => {
                            if x[i] > 0.0 {
                                g[i]
                            } else {
                                0.0
                            }
                        }
                    };
                }
            }
            Op::Reduce { kind, input, axis } => {
                let shape = self.value(*input).shape().to_vec();
                let numel = self.value(*input).numel();
                let ga = self.slot(grads, *input);
                match axis {
                    None => {
                        let s = match kind {
                            Reduce::Sum => g[0],
                            Reduce::Mean => g[0] / numel.max(1) as f64,
                        };
                        ga.iter_mut().for_each(|x| *x += s);
                    }
                    Some(ax) => {
                        let (outer, len, inner) = split_axis(&shape, *ax);
                        let div = match kind {
                            Reduce::Sum => 1.0,
                            Reduce::Mean => len.max(1) as f64,
                        };
                        for o in 0..outer {
                            for l in 0..len {
                                let base = (o * len + l) * inner;
                                for i in 0..inner {
                                    ga[base + i] += g[o * inner + i] / div;
                                }
                            }
                        }
                    }
                }
            }
            Op::L2Normalize(a) => {
                let x = self.value(*a);
                let d = x.shape()[1];
                let y = out.data();
                let ga = self.slot(grads, *a);
                for i in 0..x.shape()[0] {
                    let xr = x.row(i);
                    let norm = xr.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let yr = &y[i * d..(i + 1) * d];
                    let gr = &g[i * d..(i + 1) * d];
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for j in 0..d {
                        ga[i * d + j] += (gr[j] - yr[j] * dot) / norm;
                    }
                }
            }
            Op::LogSoftmax(a) => {
                let (n, c) = out.dims2().expect("log_softmax output");
                let ga = self.slot(grads, *a);
                for i in 0..n {
                    let gr = &g[i * c..(i + 1) * c];
                    let gs: f64 = gr.iter().sum();
                    for j in 0..c {
                        ga[i * c + j] += gr[j] - out.data()[i * c + j].exp() * gs;
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).numel();
                    if self.requires_grad(*p) {
                        let gp = self.slot(grads, *p);
                        gp.iter_mut().zip(&g[offset..offset + len]).for_each(|(x, y)| *x += y);
                    }
                    offset += len;
                }
            }
            Op::PairwiseSqDist(a) => {
                let x = self.value(*a);
                let (n, d) = x.dims2().expect("pairwise operand");
                let ga = self.slot(grads, *a);
                for i in 0..n {
                    for j in 0..n {
                        if i == j {
                            continue;
                        }
                        let w = 2.0 * g[i * n + j];
                        if w == 0.0 {
                            continue;
                        }
                        for k in 0..d {
                            let diff = x.data()[i * d + k] - x.data()[j * d + k];
                            ga[i * d + k] += w * diff;
                            ga[j * d + k] -= w * diff;
                        }
                    }
                }
            }
        }
    }

    /// Mutable gradient buffer for `v` in the current backward pass.
    #[allow(clippy::mut_from_ref)]
    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> &'g mut [f64] {
        let n = self.nodes[v.0].value.numel();
        grads[v.0].get_or_insert_with(|| vec![0.0; n])
    }
}

#[inline]
fn bidx(i: usize, len: usize) -> usize {
    if len == 1 {
        0
    } else {
        i
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

/// `c (+)= op(a) · op(b)` where `op(a)` is `m × k` and `op(b)` is `k × n`.
/// Transposed operands are read through strides, never copied.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the asserts above pin every buffer to the extent implied by
    // (m, k, n) and the chosen strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
