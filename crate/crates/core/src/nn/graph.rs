//! Reverse-mode automatic differentiation over small dense matrices.
//!
//! A [`Graph`] is a tape: every operation appends a node, so node order is
//! already a topological order and backward simply walks it in reverse.
//! Binary elementwise operations broadcast operands whose row or column
//! count is 1. Shape errors are programming errors and panic.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::special::{digamma_unchecked, ln_gamma_unchecked, trigamma_unchecked};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    Offset(Var),
    Ln(Var),
    Exp(Var),
    Softplus(Var),
    Relu(Var),
    Square(Var),
    Sqrt(Var),
    Lgamma(Var),
    Digamma(Var),
    Column(Var, usize),
    Concat(Vec<Var>),
    SumAll(Var),
    SumCols(Var),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Matrix,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
}

/// ln(1 + eˣ) without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`] for y > 0.
pub fn softplus_inverse(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
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

fn broadcast_shape(a: &Matrix, b: &Matrix) -> (usize, usize) {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            x
        } else if x == 1 {
            y
        } else {
            panic!(
                "cannot broadcast {}x{} with {}x{}",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            )
        }
    };
    (dim(a.rows(), b.rows()), dim(a.cols(), b.cols()))
}

#[inline]
fn at(m: &Matrix, i: usize, j: usize) -> f64 {
    m[(if m.rows() == 1 { 0 } else { i }, if m.cols() == 1 { 0 } else { j })]
}

#[inline]
fn at_mut(m: &mut Matrix, i: usize, j: usize) -> &mut f64 {
    let (r, c) = (m.rows(), m.cols());
    &mut m[(if r == 1 { 0 } else { i }, if c == 1 { 0 } else { j })]
}

fn zip_broadcast(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let (r, c) = broadcast_shape(a, b);
    let mut out = Matrix::zeros(r, c);
    for i in 0..r {
        for j in 0..c {
            out[(i, j)] = f(at(a, i, j), at(b, i, j));
        }
    }
    out
}

fn map(a: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    let mut out = a.clone();
    out.as_mut_slice().iter_mut().for_each(|x| *x = f(*x));
    out
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

    fn push(&mut self, op: Op, value: Matrix) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; receives an adjoint but is never updated.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn scalar(&mut self, x: f64) -> Var {
        self.leaf(Matrix::filled(1, 1, x))
    }

    /// Trainable parameter number `index`.
    pub fn param(&mut self, index: usize, value: Matrix) -> Var {
        self.push(Op::Param(index), value)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Value of a 1×1 node.
    pub fn scalar_value(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!((m.rows(), m.cols()), (1, 1), "not a scalar node");
        m[(0, 0)]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let m = self.value(v);
        (m.rows(), m.cols())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self
            .value(a)
            .matmul(self.value(b))
            .unwrap_or_else(|e| panic!("matmul: {e}"));
        self.push(Op::MatMul(a, b), value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = zip_broadcast(self.value(a), self.value(b), |x, y| x + y);
        self.push(Op::Add(a, b), value)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = zip_broadcast(self.value(a), self.value(b), |x, y| x - y);
        self.push(Op::Sub(a, b), value)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = zip_broadcast(self.value(a), self.value(b), |x, y| x * y);
        self.push(Op::Mul(a, b), value)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let value = zip_broadcast(self.value(a), self.value(b), |x, y| x / y);
        self.push(Op::Div(a, b), value)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let value = map(self.value(a), |x| -x);
        self.push(Op::Neg(a), value)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = map(self.value(a), |x| c * x);
        self.push(Op::Scale(a, c), value)
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let value = map(self.value(a), |x| x + c);
        self.push(Op::Offset(a), value)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let value = map(self.value(a), f64::ln);
        self.push(Op::Ln(a), value)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = map(self.value(a), f64::exp);
        self.push(Op::Exp(a), value)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let value = map(self.value(a), softplus);
        self.push(Op::Softplus(a), value)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = map(self.value(a), |x| if x > 0.0 { x } else { 0.0 });
        self.push(Op::Relu(a), value)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = map(self.value(a), |x| x * x);
        self.push(Op::Square(a), value)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let value = map(self.value(a), f64::sqrt);
        self.push(Op::Sqrt(a), value)
    }

    pub fn lgamma(&mut self, a: Var) -> Var {
        let value = map(self.value(a), ln_gamma_unchecked);
        self.push(Op::Lgamma(a), value)
    }

    pub fn digamma(&mut self, a: Var) -> Var {
        let value = map(self.value(a), digamma_unchecked);
        self.push(Op::Digamma(a), value)
    }

    /// Column `j` as an r×1 node.
    pub fn column(&mut self, a: Var, j: usize) -> Var {
        let m = self.value(a);
        assert!(j < m.cols(), "column {j} out of range for {} columns", m.cols());
        let value = Matrix::from_vec(m.rows(), 1, m.column(j)).expect("column length");
        self.push(Op::Column(a, j), value)
    }

    /// Horizontal concatenation of nodes with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut value = Matrix::zeros(rows, cols);
        let mut off = 0;
        for p in parts {
            let m = self.value(*p);
            assert_eq!(m.rows(), rows, "concat row mismatch");
            for i in 0..rows {
                for j in 0..m.cols() {
                    value[(i, off + j)] = m[(i, j)];
                }
            }
            off += m.cols();
        }
        self.push(Op::Concat(parts.to_vec()), value)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).as_slice().iter().sum();
        self.push(Op::SumAll(a), Matrix::filled(1, 1, s))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).as_slice().len();
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    /// Row sums: r×c becomes r×1.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let value =
            Matrix::from_vec(m.rows(), 1, (0..m.rows()).map(|i| m.row(i).iter().sum()).collect()).expect("row sums");
        self.push(Op::SumCols(a), value)
    }

    /// Reverse sweep from a 1×1 node. Adjoints from earlier sweeps are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(Error::InvalidArgument(format!(
                "backward needs a scalar loss, got {r}x{c}"
            )));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else { continue };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn acc(&mut self, v: Var, f: impl FnOnce(&mut Matrix, &[Node])) {
        let shape = self.shape(v);
        let mut g = self.grads[v.0]
            .take()
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1));
        f(&mut g, &self.nodes);
        self.grads[v.0] = Some(g);
    }

    /// Adds `g ∘ d` (broadcast-reduced) into the adjoint of `v`.
    fn acc_elementwise(&mut self, v: Var, g: &Matrix, d: impl Fn(usize, usize, &[Node]) -> f64) {
        self.acc(v, |acc, nodes| {
            for i in 0..g.rows() {
                for j in 0..g.cols() {
                    *at_mut(acc, i, j) += g[(i, j)] * d(i, j, nodes);
                }
            }
        });
    }

    fn propagate(&mut self, i: usize, g: &Matrix) {
        let op = self.nodes[i].op.clone();
        let val = |nodes: &[Node], v: Var, r: usize, c: usize| at(&nodes[v.0].value, r, c);
        match op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let ga = g.matmul(&self.value(b).transpose()).expect("matmul adjoint");
                let gb = self.value(a).transpose().matmul(g).expect("matmul adjoint");
                self.acc_elementwise(a, &ga, |_, _, _| 1.0);
                self.acc_elementwise(b, &gb, |_, _, _| 1.0);
            }
            Op::Add(a, b) => {
                self.acc_elementwise(a, g, |_, _, _| 1.0);
                self.acc_elementwise(b, g, |_, _, _| 1.0);
            }
            Op::Sub(a, b) => {
                self.acc_elementwise(a, g, |_, _, _| 1.0);
                self.acc_elementwise(b, g, |_, _, _| -1.0);
            }
            Op::Mul(a, b) => {
                self.acc_elementwise(a, g, |r, c, n| val(n, b, r, c));
                self.acc_elementwise(b, g, |r, c, n| val(n, a, r, c));
            }
            Op::Div(a, b) => {
                self.acc_elementwise(a, g, |r, c, n| 1.0 / val(n, b, r, c));
                self.acc_elementwise(b, g, |r, c, n| {
                    let y = val(n, b, r, c);
                    -val(n, a, r, c) / (y * y)
                });
            }
            Op::Neg(a) => self.acc_elementwise(a, g, |_, _, _| -1.0),
            Op::Scale(a, k) => self.acc_elementwise(a, g, |_, _, _| k),
            Op::Offset(a) => self.acc_elementwise(a, g, |_, _, _| 1.0),
            Op::Ln(a) => self.acc_elementwise(a, g, |r, c, n| 1.0 / val(n, a, r, c)),
            Op::Exp(a) => self.acc_elementwise(a, g, |r, c, n| n[i].value[(r, c)]),
            Op::Softplus(a) => self.acc_elementwise(a, g, |r, c, n| sigmoid(val(n, a, r, c))),
            Op::Relu(a) => self.acc_elementwise(a, g, |r, c, n| if val(n, a, r, c) > 0.0 { 1.0 } else { 0.0 }),
            Op::Square(a) => self.acc_elementwise(a, g, |r, c, n| 2.0 * val(n, a, r, c)),
            Op::Sqrt(a) => self.acc_elementwise(a, g, |r, c, n| 0.5 / n[i].value[(r, c)]),
            Op::Lgamma(a) => self.acc_elementwise(a, g, |r, c, n| digamma_unchecked(val(n, a, r, c))),
            Op::Digamma(a) => self.acc_elementwise(a, g, |r, c, n| trigamma_unchecked(val(n, a, r, c))),
            Op::Column(a, j) => self.acc(a, |acc, _| {
                for r in 0..g.rows() {
                    acc[(r, j)] += g[(r, 0)];
                }
            }),
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let w = self.shape(p).1;
                    self.acc(p, |acc, _| {
                        for r in 0..g.rows() {
                            for c in 0..w {
                                acc[(r, c)] += g[(r, off + c)];
                            }
                        }
                    });
                    off += w;
                }
            }
            Op::SumAll(a) => {
                let s = g[(0, 0)];
                self.acc(a, |acc, _| acc.as_mut_slice().iter_mut().for_each(|x| *x += s));
            }
            Op::SumCols(a) => self.acc(a, |acc, _| {
                for r in 0..acc.rows() {
                    let s = g[(r, 0)];
                    for c in 0..acc.cols() {
                        acc[(r, c)] += s;
                    }
                }
            }),
        }
    }

    /// Adjoint of `v` from the last [`Graph::backward`], if it was reached.
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Adjoints of every parameter node, indexed by parameter number. Parameters
    /// that did not influence the loss get zeros of the given shapes.
    pub fn param_grads(&self, shapes: &[(usize, usize)]) -> Vec<Matrix> {
        let mut out: Vec<Matrix> = shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect();
        for (n, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(k), Some(g)) = (&node.op, self.grads.get(n).and_then(Option::as_ref)) {
                let dst = &mut out[*k];
                for (d, s) in dst.as_mut_slice().iter_mut().zip(g.as_slice()) {
                    *d += s;
                }
            }
        }
        out
    }
}
