//! Define-by-run reverse-mode differentiation.
//!
//! A [`Tape`] records every operation applied to its [`Var`]s. Calling
//! [`Var::backward`] on a scalar walks the record in reverse and returns the
//! gradient of that scalar with respect to every recorded node. A fresh tape
//! is built for each optimization step; parameters enter it as leaves.

use std::cell::RefCell;
use std::rc::Rc;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::dense::{matmul_nt, matmul_raw, matmul_tn};
use crate::tensor::{SparseMatrix, Tensor};

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    SpMM(Arc<SparseMatrix>, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    BiasAdd(usize, usize),
    PRelu(usize, usize),
    Sigmoid(usize),
    LogSigmoid(usize),
    Log(usize),
    Neg(usize),
    Scale(usize, f64),
    ScaleBy(usize, usize),
    Softmax(usize),
    LogSoftmaxRows(usize),
    MeanRows(usize),
    RowSum(usize),
    Mean(usize),
    Sum(usize),
    Dot(usize, usize),
    MatVec(usize, usize),
    Transpose(usize),
    Stack(Vec<usize>),
    Index(usize, usize),
    GatherRows(usize, Rc<Vec<usize>>),
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    /// Whether any trainable leaf feeds this node.
    grad: bool,
}

impl Op {
    fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::BiasAdd(a, b)
            | Op::PRelu(a, b)
            | Op::ScaleBy(a, b)
            | Op::Dot(a, b)
            | Op::MatVec(a, b) => vec![*a, *b],
            Op::SpMM(_, x)
            | Op::Sigmoid(x)
            | Op::LogSigmoid(x)
            | Op::Log(x)
            | Op::Neg(x)
            | Op::Scale(x, _)
            | Op::Softmax(x)
            | Op::LogSoftmaxRows(x)
            | Op::MeanRows(x)
            | Op::RowSum(x)
            | Op::Mean(x)
            | Op::Sum(x)
            | Op::Transpose(x)
            | Op::Index(x, _)
            | Op::GatherRows(x, _) => vec![*x],
            Op::Stack(items) => items.clone(),
        }
    }
}

/// Record of a forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a leaf. Leaves receive gradients like any other node.
    pub fn var(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, true)
    }

    /// A leaf whose gradient is not needed; backward skips work flowing
    /// only into constants, and [`Gradients::get`] returns zeros for them.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    fn leaf(&self, value: Tensor, grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op: Op::Leaf,
            grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let grad = op.inputs().iter().any(|&i| nodes[i].grad);
        nodes.push(Node {
            value: Rc::new(value),
            op,
            grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Stacks scalar vars into a vector.
    pub fn stack<'t>(&'t self, items: &[Var<'t>]) -> Result<Var<'t>> {
        let mut data = Vec::with_capacity(items.len());
        for v in items {
            let t = v.value();
            if t.len() != 1 {
                return Err(Error::shape("stack", &[1], t.shape()));
            }
            data.push(t.item());
        }
        Ok(self.push(
            Tensor::vector(data),
            Op::Stack(items.iter().map(|v| v.id).collect()),
        ))
    }

    /// Sparse-dense product with a constant sparse operand.
    pub fn spmm<'t>(&'t self, a: &Arc<SparseMatrix>, x: Var<'t>) -> Result<Var<'t>> {
        let out = a.spmm(&x.value())?;
        Ok(self.push(out, Op::SpMM(Arc::clone(a), x.id)))
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    Ok(())
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape")
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)`, stable for large |x|.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    sigmoid(x)
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    /// Scalar value of a single-element var.
    pub fn item(&self) -> f64 {
        self.value().item()
    }

    fn unary(self, op: Op, out: Tensor) -> Var<'t> {
        self.tape.push(out, op)
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let out = self.value().matmul(&other.value())?;
        Ok(self.tape.push(out, Op::MatMul(self.id, other.id)))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape("add", &a, &b)?;
        Ok(self.tape.push(zip_map(&a, &b, |x, y| x + y), Op::Add(self.id, other.id)))
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape("sub", &a, &b)?;
        Ok(self.tape.push(zip_map(&a, &b, |x, y| x - y), Op::Sub(self.id, other.id)))
    }

    /// Elementwise product.
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape("mul", &a, &b)?;
        Ok(self.tape.push(zip_map(&a, &b, |x, y| x * y), Op::Mul(self.id, other.id)))
    }

    /// Adds a length-`cols` vector to every row of a matrix.
    pub fn bias_add(self, bias: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), bias.value());
        if a.rank() != 2 || b.rank() != 1 || a.cols() != b.len() {
            return Err(Error::shape("bias_add", a.shape(), b.shape()));
        }
        let c = a.cols();
        let data = a
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + b.data()[i % c])
            .collect();
        let out = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.tape.push(out, Op::BiasAdd(self.id, bias.id)))
    }

    /// PReLU with a single learnable slope (a scalar var).
    pub fn prelu(self, slope: Var<'t>) -> Result<Var<'t>> {
        let s = slope.value();
        if s.len() != 1 {
            return Err(Error::shape("prelu", &[1], s.shape()));
        }
        let a = s.item();
        let out = self.value().map(|x| if x > 0.0 { x } else { a * x });
        Ok(self.tape.push(out, Op::PRelu(self.id, slope.id)))
    }

    pub fn sigmoid(self) -> Var<'t> {
        let out = self.value().map(sigmoid);
        self.unary(Op::Sigmoid(self.id), out)
    }

    pub fn log_sigmoid(self) -> Var<'t> {
        let out = self.value().map(log_sigmoid);
        self.unary(Op::LogSigmoid(self.id), out)
    }

    pub fn log(self) -> Var<'t> {
        let out = self.value().map(f64::ln);
        self.unary(Op::Log(self.id), out)
    }

    pub fn neg(self) -> Var<'t> {
        let out = self.value().map(|x| -x);
        self.unary(Op::Neg(self.id), out)
    }

    /// Multiplies by a constant.
    pub fn scale(self, c: f64) -> Var<'t> {
        let out = self.value().map(|x| x * c);
        self.unary(Op::Scale(self.id, c), out)
    }

    /// Multiplies every element by a scalar var.
    pub fn scale_by(self, s: Var<'t>) -> Result<Var<'t>> {
        let sv = s.value();
        if sv.len() != 1 {
            return Err(Error::shape("scale_by", &[1], sv.shape()));
        }
        let c = sv.item();
        let out = self.value().map(|x| x * c);
        Ok(self.tape.push(out, Op::ScaleBy(self.id, s.id)))
    }

    /// Softmax of a vector.
    pub fn softmax(self) -> Result<Var<'t>> {
        let x = self.value();
        if x.rank() != 1 {
            return Err(Error::shape("softmax", &[x.len()], x.shape()));
        }
        let max = x.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = x.data().iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let out = Tensor::vector(exps.into_iter().map(|e| e / total).collect());
        Ok(self.unary(Op::Softmax(self.id), out))
    }

    /// Row-wise log-softmax of a matrix.
    pub fn log_softmax_rows(self) -> Result<Var<'t>> {
        let x = self.value();
        if x.rank() != 2 {
            return Err(Error::shape("log_softmax_rows", &[0, 0], x.shape()));
        }
        let c = x.cols();
        let mut data = Vec::with_capacity(x.len());
        for r in 0..x.rows() {
            let row = x.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            data.extend(row.iter().map(|v| v - lse));
        }
        let out = Tensor::matrix(x.rows(), c, data)?;
        Ok(self.unary(Op::LogSoftmaxRows(self.id), out))
    }

    /// Column means of a matrix, as a vector.
    pub fn mean_rows(self) -> Result<Var<'t>> {
        let x = self.value();
        if x.rank() != 2 || x.rows() == 0 {
            return Err(Error::shape("mean_rows", &[0, 0], x.shape()));
        }
        let (r, c) = (x.rows(), x.cols());
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, v) in out.iter_mut().zip(x.row(i)) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= r as f64;
        }
        Ok(self.unary(Op::MeanRows(self.id), Tensor::vector(out)))
    }

    /// Sum of each row of a matrix, as a vector.
    pub fn row_sum(self) -> Result<Var<'t>> {
        let x = self.value();
        if x.rank() != 2 {
            return Err(Error::shape("row_sum", &[0, 0], x.shape()));
        }
        let out = (0..x.rows()).map(|i| x.row(i).iter().sum()).collect();
        Ok(self.unary(Op::RowSum(self.id), Tensor::vector(out)))
    }

    /// Mean of all elements.
    pub fn mean(self) -> Var<'t> {
        let x = self.value();
        let m = x.data().iter().sum::<f64>() / x.len() as f64;
        self.unary(Op::Mean(self.id), Tensor::scalar(m))
    }

    pub fn sum(self) -> Var<'t> {
        let s = self.value().data().iter().sum();
        self.unary(Op::Sum(self.id), Tensor::scalar(s))
    }

    pub fn dot(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        if a.rank() != 1 || a.shape() != b.shape() {
            return Err(Error::shape("dot", a.shape(), b.shape()));
        }
        let d = a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum();
        Ok(self.tape.push(Tensor::scalar(d), Op::Dot(self.id, other.id)))
    }

    /// Matrix-vector product `self · v`.
    pub fn matvec(self, v: Var<'t>) -> Result<Var<'t>> {
        let (m, x) = (self.value(), v.value());
        if m.rank() != 2 || x.rank() != 1 || m.cols() != x.len() {
            return Err(Error::shape("matvec", m.shape(), x.shape()));
        }
        let out = matmul_raw(m.data(), x.data(), m.rows(), m.cols(), 1);
        Ok(self
            .tape
            .push(Tensor::vector(out), Op::MatVec(self.id, v.id)))
    }

    pub fn transpose(self) -> Result<Var<'t>> {
        let x = self.value();
        if x.rank() != 2 {
            return Err(Error::shape("transpose", &[0, 0], x.shape()));
        }
        Ok(self.unary(Op::Transpose(self.id), x.transpose()))
    }

    /// Element `i` of a vector, as a scalar.
    pub fn index(self, i: usize) -> Result<Var<'t>> {
        let x = self.value();
        if x.rank() != 1 || i >= x.len() {
            return Err(Error::shape("index", x.shape(), &[i]));
        }
        Ok(self.unary(Op::Index(self.id, i), Tensor::scalar(x.data()[i])))
    }

    /// Rows of a matrix picked by `index` (repeats allowed).
    pub fn gather_rows(self, index: Rc<Vec<usize>>) -> Result<Var<'t>> {
        let x = self.value();
        if x.rank() != 2 {
            return Err(Error::shape("gather_rows", &[0, 0], x.shape()));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= x.rows()) {
            return Err(Error::shape("gather_rows", x.shape(), &[bad]));
        }
        let out = x.select_rows(&index);
        Ok(self.unary(Op::GatherRows(self.id, index), out))
    }

    /// Reverse pass from a scalar. Returns gradients for every node recorded
    /// before `self`.
    pub fn backward(self) -> Result<Gradients> {
        let nodes = self.tape.nodes.borrow();
        let root = &nodes[self.id];
        if root.value.len() != 1 {
            return Err(Error::shape("backward", &[], root.value.shape()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.id + 1];
        grads[self.id] = Some(Tensor::filled(root.value.shape(), 1.0));

        for id in (0..=self.id).rev() {
            let node = &nodes[id];
            if matches!(node.op, Op::Leaf) || !node.grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let val = |i: usize| -> &Tensor { &nodes[i].value };
            let need = |i: usize| nodes[i].grad;
            let mut push = |i: usize, t: Tensor| {
                if nodes[i].grad {
                    accumulate(&mut grads, i, t)
                }
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                    if need(*a) {
                        let ga = matmul_nt(g.data(), bv.data(), m, n, k);
                        push(*a, Tensor::matrix(m, k, ga)?);
                    }
                    if need(*b) {
                        let gb = matmul_tn(av.data(), g.data(), m, k, n);
                        push(*b, Tensor::matrix(k, n, gb)?);
                    }
                }
                Op::SpMM(s, x) => {
                    if need(*x) {
                        push(*x, s.spmm_transposed(&g)?)
                    }
                }
                Op::Add(a, b) => {
                    push(*a, g.clone());
                    push(*b, g);
                }
                Op::Sub(a, b) => {
                    push(*a, g.clone());
                    push(*b, g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    push(*a, zip_map(&g, val(*b), |x, y| x * y));
                    push(*b, zip_map(&g, val(*a), |x, y| x * y));
                }
                Op::BiasAdd(a, b) => {
                    let c = g.cols();
                    let mut gb = vec![0.0; c];
                    for (i, v) in g.data().iter().enumerate() {
                        gb[i % c] += v;
                    }
                    push(*b, Tensor::vector(gb));
                    push(*a, g);
                }
                Op::PRelu(x, s) => {
                    let xv = val(*x);
                    let a = val(*s).item();
                    let gx = zip_map(&g, xv, |gi, xi| if xi > 0.0 { gi } else { a * gi });
                    let gs: f64 = g
                        .data()
                        .iter()
                        .zip(xv.data())
                        .filter(|(_, &xi)| xi <= 0.0)
                        .map(|(gi, xi)| gi * xi)
                        .sum();
                    push(*x, gx);
                    push(*s, Tensor::filled(val(*s).shape(), gs));
                }
                Op::Sigmoid(x) => {
                    push(*x, zip_map(&g, &node.value, |gi, y| gi * y * (1.0 - y)));
                }
                Op::LogSigmoid(x) => {
                    push(*x, zip_map(&g, val(*x), |gi, xi| gi * sigmoid(-xi)));
                }
                Op::Log(x) => push(*x, zip_map(&g, val(*x), |gi, xi| gi / xi)),
                Op::Neg(x) => push(*x, g.map(|v| -v)),
                Op::Scale(x, c) => {
                    let c = *c;
                    push(*x, g.map(|v| v * c));
                }
                Op::ScaleBy(x, s) => {
                    let xv = val(*x);
                    let c = val(*s).item();
                    let gs: f64 = g.data().iter().zip(xv.data()).map(|(a, b)| a * b).sum();
                    push(*s, Tensor::filled(val(*s).shape(), gs));
                    push(*x, g.map(|v| v * c));
                }
                Op::Softmax(x) => {
                    let y = &node.value;
                    let inner: f64 = g.data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
                    push(*x, zip_map(&g, y, |gi, yi| yi * (gi - inner)));
                }
                Op::LogSoftmaxRows(x) => {
                    let y = &node.value;
                    let c = y.cols();
                    let mut out = vec![0.0; y.len()];
                    for r in 0..y.rows() {
                        let gs: f64 = g.row(r).iter().sum();
                        for j in 0..c {
                            out[r * c + j] = g.row(r)[j] - y.row(r)[j].exp() * gs;
                        }
                    }
                    push(*x, Tensor::new(y.shape().to_vec(), out)?);
                }
                Op::MeanRows(x) => {
                    let xv = val(*x);
                    let r = xv.rows();
                    let scaled: Vec<f64> = g.data().iter().map(|v| v / r as f64).collect();
                    let data = (0..r).flat_map(|_| scaled.iter().copied()).collect();
                    push(*x, Tensor::new(xv.shape().to_vec(), data)?);
                }
                Op::RowSum(x) => {
                    let xv = val(*x);
                    let c = xv.cols();
                    let data = g
                        .data()
                        .iter()
                        .flat_map(|&v| std::iter::repeat_n(v, c))
                        .collect();
                    push(*x, Tensor::new(xv.shape().to_vec(), data)?);
                }
                Op::Mean(x) => {
                    let xv = val(*x);
                    push(*x, Tensor::filled(xv.shape(), g.item() / xv.len() as f64));
                }
                Op::Sum(x) => push(*x, Tensor::filled(val(*x).shape(), g.item())),
                Op::Dot(a, b) => {
                    let gv = g.item();
                    push(*a, val(*b).map(|v| v * gv));
                    push(*b, val(*a).map(|v| v * gv));
                }
                Op::MatVec(m, v) => {
                    let (mv, vv) = (val(*m), val(*v));
                    let (r, c) = (mv.rows(), mv.cols());
                    let gm = matmul_raw(g.data(), vv.data(), r, 1, c);
                    let gv = matmul_tn(mv.data(), g.data(), r, c, 1);
                    push(*m, Tensor::matrix(r, c, gm)?);
                    push(*v, Tensor::vector(gv));
                }
                Op::Transpose(x) => push(*x, g.transpose()),
                Op::Stack(items) => {
                    for (i, &item) in items.iter().enumerate() {
                        push(item, Tensor::filled(val(item).shape(), g.data()[i]));
                    }
                }
                Op::Index(x, i) => {
                    let mut t = Tensor::zeros(val(*x).shape());
                    t.data_mut()[*i] = g.item();
                    push(*x, t);
                }
                Op::GatherRows(x, index) => {
                    let xv = val(*x);
                    let c = xv.cols();
                    let mut t = Tensor::zeros(xv.shape());
                    for (k, &row) in index.iter().enumerate() {
                        let dst = &mut t.data_mut()[row * c..(row + 1) * c];
                        for (d, s) in dst.iter_mut().zip(g.row(k)) {
                            *d += s;
                        }
                    }
                    push(*x, t);
                }
            }
        }

        let shapes = nodes[..=self.id]
            .iter()
            .map(|n| n.value.shape().to_vec())
            .collect();
        Ok(Gradients { grads, shapes })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: usize, t: Tensor) {
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&t),
        slot @ None => *slot = Some(t),
    }
}

/// Gradients of one scalar with respect to the leaves of a tape.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `var`; zeros when `var` does not influence the loss.
    pub fn get(&self, var: Var<'_>) -> Tensor {
        self.grads
            .get(var.id)
            .and_then(|g| g.clone())
            .unwrap_or_else(|| match self.shapes.get(var.id) {
                Some(shape) => Tensor::zeros(shape),
                None => Tensor::zeros(&var.shape()),
            })
    }
}
