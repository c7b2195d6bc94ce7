//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of one forward pass as a node holding
//! its value and the ids of its parents. Nodes are appended in evaluation
//! order, so the tape is acyclic by construction and a single reverse sweep
//! in [`Tape::backward`] visits children before parents.
//!
//! ```
//! use dcrn::linalg::{Matrix, Tape};
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Matrix::from_rows(&[[1.0, 2.0]]).unwrap());
//! let sq = tape.hadamard(x, x).unwrap();
//! let loss = tape.sum(sq).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.wrt(x).as_slice(), &[2.0, 4.0]);
//! ```

use std::sync::atomic::{AtomicU8, Ordering};

use ndarray::{Array2, Axis, Zip};

use super::Matrix;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Transpose(Var),
    Relu(Var),
    Sigmoid(Var),
    Log(Var),
    Sqrt(Var),
    Square(Var),
    Recip(Var),
    Sum(Var),
    Mean(Var),
    RowSums(Var),
    ColSums(Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    RowSoftmax(Var),
    Cosine {
        a: Var,
        b: Var,
        a_unit: Array2<f64>,
        b_unit: Array2<f64>,
        a_norm: Vec<f64>,
        b_norm: Vec<f64>,
    },
    SqDist(Var, Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Hadamard(..) => "hadamard",
            Op::Scale(..) => "scalar_mul",
            Op::AddScalar(..) => "add_scalar",
            Op::Transpose(..) => "transpose",
            Op::Relu(..) => "relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Log(..) => "log",
            Op::Sqrt(..) => "sqrt",
            Op::Square(..) => "square",
            Op::Recip(..) => "recip",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::RowSums(..) => "row_sums",
            Op::ColSums(..) => "col_sums",
            Op::MulRow(..) => "mul_row",
            Op::MulCol(..) => "mul_col",
            Op::RowSoftmax(..) => "row_softmax",
            Op::Cosine { .. } => "cosine_matrix",
            Op::SqDist(..) => "sq_dist",
        }
    }

    fn parents(&self) -> Vec<Var> {
        match *self {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Hadamard(a, b)
            | Op::MulRow(a, b)
            | Op::MulCol(a, b)
            | Op::SqDist(a, b)
            | Op::Cosine { a, b, .. } => vec![a, b],
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Transpose(a)
            | Op::Relu(a)
            | Op::Sigmoid(a)
            | Op::Log(a)
            | Op::Sqrt(a)
            | Op::Square(a)
            | Op::Recip(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::RowSums(a)
            | Op::ColSums(a)
            | Op::RowSoftmax(a) => vec![a],
        }
    }
}

/// Deliberate corruption of one backward rule, used to prove that the
/// gradient-check harness notices broken derivatives.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Fault {
    None = 0,
    Cosine = 1,
    RowSoftmax = 2,
    MatMul = 3,
}

static FAULT: AtomicU8 = AtomicU8::new(Fault::None as u8);

#[doc(hidden)]
pub fn inject_fault(fault: Fault) {
    FAULT.store(fault as u8, Ordering::SeqCst);
}

fn fault_active(f: Fault) -> bool {
    FAULT.load(Ordering::Relaxed) == f as u8
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Matrix,
    requires_grad: bool,
}

/// Record of one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if any flowed there.
    pub fn get(&self, v: Var) -> Option<Matrix> {
        self.grads[v.0].clone().map(Matrix::from_array)
    }

    /// Gradient with respect to `v`, zeros when `v` does not influence the loss.
    pub fn wrt(&self, v: Var) -> Matrix {
        self.get(v).unwrap_or_else(|| {
            let (r, c) = self.shapes[v.0];
            Matrix::zeros(r, c)
        })
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

    /// Adds a differentiable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push_raw(Op::Leaf, value, true)
    }

    /// Adds a leaf that never receives gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push_raw(Op::Leaf, value, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.shape(), (1, 1));
        m[(0, 0)]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn push_raw(&mut self, op: Op, value: Matrix, requires_grad: bool) -> Var {
        let id = Var(self.nodes.len());
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        id
    }

    fn push(&mut self, op: Op, value: Array2<f64>) -> Result<Var> {
        if !value.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op: op.name() });
        }
        let requires_grad = op.parents().iter().any(|p| self.nodes[p.0].requires_grad);
        Ok(self.push_raw(op, Matrix::from_array(value), requires_grad))
    }

    fn arr(&self, v: Var) -> &Array2<f64> {
        self.nodes[v.0].value.array()
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::Shape {
                op,
                left: sa,
                right: sb,
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(Error::Shape {
                op: "matmul",
                left: sa,
                right: sb,
            });
        }
        let v = self.arr(a).dot(self.arr(b));
        self.push(Op::MatMul(a, b), v)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.arr(a) + self.arr(b);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.arr(a) - self.arr(b);
        self.push(Op::Sub(a, b), v)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("hadamard", a, b)?;
        let v = self.arr(a) * self.arr(b);
        self.push(Op::Hadamard(a, b), v)
    }

    pub fn scalar_mul(&mut self, a: Var, c: f64) -> Result<Var> {
        let v = self.arr(a) * c;
        self.push(Op::Scale(a, c), v)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let v = self.arr(a) + c;
        self.push(Op::AddScalar(a), v)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let v = self.arr(a).t().as_standard_layout().into_owned();
        self.push(Op::Transpose(a), v)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let v = self.arr(a).mapv(|x| x.max(0.0));
        self.push(Op::Relu(a), v)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let v = self.arr(a).mapv(sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    fn check_positive(&self, op: &'static str, a: Var) -> Result<()> {
        if let Some(((i, j), &x)) = self.arr(a).indexed_iter().find(|(_, &x)| x <= 0.0 || x.is_nan()) {
            return Err(Error::Domain {
                op,
                index: (i, j),
                value: x,
            });
        }
        Ok(())
    }

    /// Natural logarithm; every entry must be strictly positive.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.check_positive("log", a)?;
        let v = self.arr(a).mapv(f64::ln);
        self.push(Op::Log(a), v)
    }

    /// Square root; every entry must be strictly positive.
    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.check_positive("sqrt", a)?;
        let v = self.arr(a).mapv(f64::sqrt);
        self.push(Op::Sqrt(a), v)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let v = self.arr(a).mapv(|x| x * x);
        self.push(Op::Square(a), v)
    }

    /// Element-wise reciprocal.
    pub fn recip(&mut self, a: Var) -> Result<Var> {
        if let Some(((i, j), &x)) = self.arr(a).indexed_iter().find(|(_, &x)| x == 0.0) {
            return Err(Error::Domain {
                op: "recip",
                index: (i, j),
                value: x,
            });
        }
        let v = self.arr(a).mapv(f64::recip);
        self.push(Op::Recip(a), v)
    }

    /// Sum of all entries, as a 1x1 node.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = Array2::from_elem((1, 1), self.arr(a).sum());
        self.push(Op::Sum(a), v)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len().max(1) as f64;
        let v = Array2::from_elem((1, 1), self.arr(a).sum() / n);
        self.push(Op::Mean(a), v)
    }

    /// Per-row sums, `rows x 1`.
    pub fn row_sums(&mut self, a: Var) -> Result<Var> {
        let v = self.arr(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(Op::RowSums(a), v)
    }

    /// Per-column sums, `1 x cols`.
    pub fn col_sums(&mut self, a: Var) -> Result<Var> {
        let v = self.arr(a).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.push(Op::ColSums(a), v)
    }

    /// Scales column `j` of `x` by `row[0][j]`.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (sx, sr) = (self.shape(x), self.shape(row));
        if sr != (1, sx.1) {
            return Err(Error::Shape {
                op: "mul_row",
                left: sx,
                right: sr,
            });
        }
        let v = self.arr(x) * self.arr(row);
        self.push(Op::MulRow(x, row), v)
    }

    /// Scales row `i` of `x` by `col[i][0]`.
    pub fn mul_col(&mut self, x: Var, col: Var) -> Result<Var> {
        let (sx, sc) = (self.shape(x), self.shape(col));
        if sc != (sx.0, 1) {
            return Err(Error::Shape {
                op: "mul_col",
                left: sx,
                right: sc,
            });
        }
        let v = self.arr(x) * self.arr(col);
        self.push(Op::MulCol(x, col), v)
    }

    /// Numerically stable softmax over each row.
    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        let mut v = self.arr(a).clone();
        for mut row in v.rows_mut() {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|x| (x - max).exp());
            let s = row.sum();
            row.mapv_inplace(|x| x / s);
        }
        self.push(Op::RowSoftmax(a), v)
    }

    /// Cosine similarity between every row of `a` and every row of `b`.
    pub fn cosine_matrix(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.1 {
            return Err(Error::Shape {
                op: "cosine_matrix",
                left: sa,
                right: sb,
            });
        }
        let (a_unit, a_norm) = unit_rows(self.arr(a))?;
        let (b_unit, b_norm) = unit_rows(self.arr(b))?;
        let v = a_unit.dot(&b_unit.t());
        self.push(
            Op::Cosine {
                a,
                b,
                a_unit,
                b_unit,
                a_norm,
                b_norm,
            },
            v,
        )
    }

    /// Squared Euclidean distance between every row of `a` and every row of `b`.
    pub fn sq_dist(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.1 {
            return Err(Error::Shape {
                op: "sq_dist",
                left: sa,
                right: sb,
            });
        }
        let (x, y) = (self.arr(a), self.arr(b));
        let v = Array2::from_shape_fn((sa.0, sb.0), |(i, j)| {
            x.row(i)
                .iter()
                .zip(y.row(j))
                .map(|(p, q)| (p - q) * (p - q))
                .sum()
        });
        self.push(Op::SqDist(a, b), v)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::Shape {
                op: "backward",
                left: shape,
                right: (1, 1),
            });
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Array2::ones((1, 1)));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let mut acc = |v: Var, d: Array2<f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &d,
                slot @ None => *slot = Some(d),
            }
        };
        let y = node.value.array();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let mut da = g.dot(&self.arr(*b).t());
                if fault_active(Fault::MatMul) {
                    da *= 1.01;
                }
                acc(*a, da);
                acc(*b, self.arr(*a).t().dot(g));
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, -g);
            }
            Op::Hadamard(a, b) => {
                acc(*a, g * self.arr(*b));
                acc(*b, g * self.arr(*a));
            }
            Op::Scale(a, c) => acc(*a, g * *c),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::Transpose(a) => acc(*a, g.t().as_standard_layout().into_owned()),
            Op::Relu(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(self.arr(*a))
                    .for_each(|d, &x| {
                        if x <= 0.0 {
                            *d = 0.0
                        }
                    });
                acc(*a, d);
            }
            Op::Sigmoid(a) => {
                let mut d = g.clone();
                Zip::from(&mut d).and(y).for_each(|d, &s| *d *= s * (1.0 - s));
                acc(*a, d);
            }
            Op::Log(a) => acc(*a, g / self.arr(*a)),
            Op::Sqrt(a) => acc(*a, g / &(y * 2.0)),
            Op::Square(a) => acc(*a, g * &(self.arr(*a) * 2.0)),
            Op::Recip(a) => acc(*a, -(g * &(y * y))),
            Op::Sum(a) => {
                let shape = self.arr(*a).dim();
                acc(*a, Array2::from_elem(shape, g[(0, 0)]));
            }
            Op::Mean(a) => {
                let shape = self.arr(*a).dim();
                let n = (shape.0 * shape.1).max(1) as f64;
                acc(*a, Array2::from_elem(shape, g[(0, 0)] / n));
            }
            Op::RowSums(a) => {
                let shape = self.arr(*a).dim();
                acc(*a, g.broadcast(shape).expect("row_sums broadcast").to_owned());
            }
            Op::ColSums(a) => {
                let shape = self.arr(*a).dim();
                acc(*a, g.broadcast(shape).expect("col_sums broadcast").to_owned());
            }
            Op::MulRow(x, r) => {
                acc(*x, g * self.arr(*r));
                let dr = (g * self.arr(*x)).sum_axis(Axis(0)).insert_axis(Axis(0));
                acc(*r, dr);
            }
            Op::MulCol(x, c) => {
                acc(*x, g * self.arr(*c));
                let dc = (g * self.arr(*x)).sum_axis(Axis(1)).insert_axis(Axis(1));
                acc(*c, dc);
            }
            Op::RowSoftmax(a) => {
                let mut d = g * y;
                let dots = d.sum_axis(Axis(1));
                for ((mut row, &dot), yrow) in d.rows_mut().into_iter().zip(dots.iter()).zip(y.rows()) {
                    row.zip_mut_with(&yrow, |v, &p| *v -= p * dot);
                }
                if fault_active(Fault::RowSoftmax) {
                    d *= 1.01;
                }
                acc(*a, d);
            }
            Op::Cosine {
                a,
                b,
                a_unit,
                b_unit,
                a_norm,
                b_norm,
            } => {
                let d_au = g.dot(b_unit);
                let d_bu = g.t().dot(a_unit);
                let mut da = unit_rows_backward(a_unit, a_norm, d_au);
                if fault_active(Fault::Cosine) {
                    da *= 1.01;
                }
                acc(*a, da);
                acc(*b, unit_rows_backward(b_unit, b_norm, d_bu));
            }
            Op::SqDist(a, b) => {
                let (x, m) = (self.arr(*a), self.arr(*b));
                let rs = g.sum_axis(Axis(1)).insert_axis(Axis(1));
                let cs = g.sum_axis(Axis(0)).insert_axis(Axis(1));
                let dx = (x * &rs - g.dot(m)) * 2.0;
                let dm = (m * &cs - g.t().dot(x)) * 2.0;
                acc(*a, dx);
                acc(*b, dm);
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn unit_rows(x: &Array2<f64>) -> Result<(Array2<f64>, Vec<f64>)> {
    let mut unit = x.clone();
    let mut norms = Vec::with_capacity(x.nrows());
    for (i, mut row) in unit.rows_mut().into_iter().enumerate() {
        let n = row.dot(&row).sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::DegenerateRow {
                op: "cosine_matrix",
                row: i,
            });
        }
        row.mapv_inplace(|v| v / n);
        norms.push(n);
    }
    Ok((unit, norms))
}

// d/dx of x/|x| applied to upstream `d_unit`.
fn unit_rows_backward(unit: &Array2<f64>, norms: &[f64], mut d_unit: Array2<f64>) -> Array2<f64> {
    for ((mut d, u), &n) in d_unit.rows_mut().into_iter().zip(unit.rows()).zip(norms) {
        let proj = d.dot(&u);
        d.zip_mut_with(&u, |dv, &uv| *dv = (*dv - proj * uv) / n);
    }
    d_unit
}

/// Central-difference gradient check.
///
/// `f` builds a scalar loss from leaves holding `params`. Returns the largest
/// `|analytic - numeric| / max(1, |numeric|)` over every parameter entry.
pub fn grad_check<F>(f: F, params: &[Matrix], step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::Contract(format!("finite-difference step {step} must be > 0")));
    }
    let eval = |ps: &[Matrix]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        let v = tape.scalar(loss);
        if !v.is_finite() {
            return Err(Error::NonFinite { op: "grad_check" });
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    if !tape.scalar(loss).is_finite() {
        return Err(Error::NonFinite { op: "grad_check" });
    }
    let grads = tape.backward(loss)?;

    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var);
        for idx in 0..probe[k].len() {
            let orig = probe[k].as_slice()[idx];
            probe[k].as_mut_slice()[idx] = orig + step;
            let up = eval(&probe)?;
            probe[k].as_mut_slice()[idx] = orig - step;
            let down = eval(&probe)?;
            probe[k].as_mut_slice()[idx] = orig;
            let numeric = (up - down) / (2.0 * step);
            let err = (analytic.as_slice()[idx] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
