//! Reverse-mode differentiation over matrix-valued primitives.
//!
//! A [`Tape`] records every primitive in evaluation order. Leaves created with
//! [`Tape::param`] receive gradients; leaves created with [`Tape::constant`]
//! do not, and neither does any node that depends only on constants.
//! [`Tape::backward`] replays the tape once in reverse and consumes it.
//!
//! ```
//! use arcrec::numeric::{Matrix, Tape};
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Matrix::scalar(3.0));
//! let y = tape.mul(x, x).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(grads.get(x).unwrap().item().unwrap(), 6.0);
//! ```

use std::collections::HashMap;
use std::sync::Arc;

use super::matrix::{gemm, log_sigmoid, sigmoid};
use super::{CsrMatrix, Matrix, NumericError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Sigmoid(Var),
    LogSigmoid(Var),
    Log(Var),
    Floor(Var, f64),
    Sum(Var),
    Dot(Var, Var),
    RowDot(Var, Var),
    Norm(Var),
    RowNorm(Var),
    Softmax(Var, Arc<[usize]>),
    SegmentSum(Var, Arc<[usize]>),
    Gather(Var, Arc<[usize]>),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Sparse(Var, Arc<CsrMatrix>),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
    is_param: bool,
}

/// Records primitives for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Gradients of a scalar output with respect to every parameter leaf.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: HashMap<Var, Matrix>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Matrix> {
        self.grads.get(&var)
    }

    /// Takes a gradient out, or zeros of `shape` when the output does not
    /// depend on that parameter.
    pub fn take_or_zeros(&mut self, var: Var, shape: (usize, usize)) -> Matrix {
        self.grads
            .remove(&var)
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}

fn mismatch(op: &'static str, a: &Matrix, b: &Matrix) -> NumericError {
    NumericError::DimensionMismatch {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

/// Validates contiguous segment offsets `[0, .., n]`.
fn check_offsets(op: &'static str, offsets: &[usize], rows: usize) -> Result<(), NumericError> {
    let ok = offsets.first() == Some(&0)
        && offsets.last() == Some(&rows)
        && offsets.windows(2).all(|w| w[0] <= w[1]);
    if ok {
        Ok(())
    } else {
        Err(NumericError::BadSegments { op, rows })
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Matrix {
        &self.nodes[var.0].value
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: true,
            is_param: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
            is_param: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op_name: &'static str, value: Matrix, op: Op) -> Result<Var, NumericError> {
        if self.consumed {
            return Err(NumericError::TapeConsumed);
        }
        if !value.is_finite() {
            return Err(NumericError::NonFinite { op: op_name });
        }
        let needs_grad = self.inputs(&op).iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
            is_param: false,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn inputs(&self, op: &Op) -> Vec<Var> {
        match op {
            Op::Leaf => vec![],
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::MatMul(a, b)
            | Op::AddRow(a, b)
            | Op::MulCol(a, b)
            | Op::Dot(a, b)
            | Op::RowDot(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Sigmoid(a)
            | Op::LogSigmoid(a)
            | Op::Log(a)
            | Op::Floor(a, _)
            | Op::Sum(a)
            | Op::Norm(a)
            | Op::RowNorm(a)
            | Op::Softmax(a, _)
            | Op::SegmentSum(a, _)
            | Op::Gather(a, _)
            | Op::Sparse(a, _) => vec![*a],
            Op::ConcatRows(vs) | Op::ConcatCols(vs) => vs.clone(),
        }
    }

    fn zip_same(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, NumericError> {
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if x.shape() != y.shape() {
            return Err(mismatch(name, x, y));
        }
        let data = x
            .as_slice()
            .iter()
            .zip(y.as_slice())
            .map(|(&p, &q)| f(p, q))
            .collect();
        let value = Matrix::from_vec(x.rows(), x.cols(), data)?;
        self.push(name, value, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.zip_same("add", a, b, |p, q| p + q, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.zip_same("sub", a, b, |p, q| p - q, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.zip_same("hadamard", a, b, |p, q| p * q, Op::Mul(a, b))
    }

    /// Elementwise division.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        self.zip_same("div", a, b, |p, q| p / q, Op::Div(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, NumericError> {
        let value = self.nodes[a.0].value.map(|v| v * factor);
        self.push("scale", value, Op::Scale(a, factor))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let value = self.nodes[a.0].value.matmul(&self.nodes[b.0].value)?;
        self.push("matmul", value, Op::MatMul(a, b))
    }

    /// Adds a `1 × m` row to every row of an `n × m` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NumericError> {
        let (x, r) = (&self.nodes[a.0].value, &self.nodes[row.0].value);
        if r.rows() != 1 || r.cols() != x.cols() {
            return Err(mismatch("add_row", x, r));
        }
        let mut value = x.clone();
        for i in 0..value.rows() {
            for (o, b) in value.row_mut(i).iter_mut().zip(r.as_slice()) {
                *o += b;
            }
        }
        self.push("add_row", value, Op::AddRow(a, row))
    }

    /// Multiplies row `i` of an `n × m` matrix by entry `i` of an `n × 1` column.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var, NumericError> {
        let (x, c) = (&self.nodes[a.0].value, &self.nodes[col.0].value);
        if c.cols() != 1 || c.rows() != x.rows() {
            return Err(mismatch("mul_col", x, c));
        }
        let mut value = x.clone();
        for i in 0..value.rows() {
            let s = c.as_slice()[i];
            for o in value.row_mut(i) {
                *o *= s;
            }
        }
        self.push("mul_col", value, Op::MulCol(a, col))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, NumericError> {
        let value = self.nodes[a.0].value.map(sigmoid);
        self.push("sigmoid", value, Op::Sigmoid(a))
    }

    /// `ln σ(x)`, evaluated without underflow for large negative `x`.
    pub fn log_sigmoid(&mut self, a: Var) -> Result<Var, NumericError> {
        let value = self.nodes[a.0].value.map(log_sigmoid);
        self.push("log_sigmoid", value, Op::LogSigmoid(a))
    }

    /// `max(x, min)` elementwise; the gradient is zero where the floor binds.
    pub fn floor(&mut self, a: Var, min: f64) -> Result<Var, NumericError> {
        let value = self.nodes[a.0].value.map(|x| x.max(min));
        self.push("floor", value, Op::Floor(a, min))
    }

    /// Natural logarithm; non-positive inputs yield a non-finite error.
    pub fn log(&mut self, a: Var) -> Result<Var, NumericError> {
        let value = self.nodes[a.0].value.map(f64::ln);
        self.push("log", value, Op::Log(a))
    }

    /// Sum of all entries as a `1 × 1` scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var, NumericError> {
        let value = Matrix::scalar(self.nodes[a.0].value.sum());
        self.push("sum", value, Op::Sum(a))
    }

    /// Inner product of two same-shape operands as a `1 × 1` scalar.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if x.shape() != y.shape() {
            return Err(mismatch("dot", x, y));
        }
        let s = x.as_slice().iter().zip(y.as_slice()).map(|(p, q)| p * q).sum();
        self.push("dot", Matrix::scalar(s), Op::Dot(a, b))
    }

    /// Row-wise inner products: `n × m`, `n × m` → `n × 1`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var, NumericError> {
        let (x, y) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if x.shape() != y.shape() {
            return Err(mismatch("row_dot", x, y));
        }
        let data = (0..x.rows())
            .map(|i| x.row(i).iter().zip(y.row(i)).map(|(p, q)| p * q).sum())
            .collect();
        self.push("row_dot", Matrix::column(data), Op::RowDot(a, b))
    }

    /// Euclidean (Frobenius) norm as a `1 × 1` scalar.
    pub fn norm(&mut self, a: Var) -> Result<Var, NumericError> {
        let value = Matrix::scalar(self.nodes[a.0].value.squared_norm().sqrt());
        self.push("norm", value, Op::Norm(a))
    }

    /// Euclidean norm of every row: `n × m` → `n × 1`.
    pub fn row_norm(&mut self, a: Var) -> Result<Var, NumericError> {
        let x = &self.nodes[a.0].value;
        let data = (0..x.rows())
            .map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        self.push("row_norm", Matrix::column(data), Op::RowNorm(a))
    }

    /// Softmax over an `n × 1` column.
    pub fn softmax(&mut self, a: Var) -> Result<Var, NumericError> {
        let n = self.nodes[a.0].value.rows();
        self.segment_softmax(a, Arc::from(vec![0, n]))
    }

    /// Independent softmax over each contiguous segment
    /// `offsets[s]..offsets[s + 1]` of an `n × 1` column.
    pub fn segment_softmax(&mut self, a: Var, offsets: Arc<[usize]>) -> Result<Var, NumericError> {
        let x = &self.nodes[a.0].value;
        if x.cols() != 1 {
            return Err(NumericError::NotColumn {
                op: "softmax",
                rows: x.rows(),
                cols: x.cols(),
            });
        }
        check_offsets("softmax", &offsets, x.rows())?;
        let mut data = Vec::with_capacity(x.rows());
        for w in offsets.windows(2) {
            data.extend(super::softmax(&x.as_slice()[w[0]..w[1]]));
        }
        self.push("softmax", Matrix::column(data), Op::Softmax(a, offsets))
    }

    /// Sums each contiguous row segment: `n × m` → `S × m`.
    pub fn segment_sum(&mut self, a: Var, offsets: Arc<[usize]>) -> Result<Var, NumericError> {
        let x = &self.nodes[a.0].value;
        check_offsets("segment_sum", &offsets, x.rows())?;
        let mut value = Matrix::zeros(offsets.len() - 1, x.cols());
        for (s, w) in offsets.windows(2).enumerate() {
            for i in w[0]..w[1] {
                for (o, v) in value.row_mut(s).iter_mut().zip(x.row(i)) {
                    *o += v;
                }
            }
        }
        self.push("segment_sum", value, Op::SegmentSum(a, offsets))
    }

    /// Selects rows by index, repeats allowed.
    pub fn gather_rows(&mut self, a: Var, indices: Arc<[usize]>) -> Result<Var, NumericError> {
        let x = &self.nodes[a.0].value;
        if let Some(&bad) = indices.iter().find(|&&i| i >= x.rows()) {
            return Err(NumericError::IndexOutOfBounds {
                index: bad,
                bound: x.rows(),
            });
        }
        let value = x.gather_rows(&indices);
        self.push("gather_rows", value, Op::Gather(a, indices))
    }

    /// Stacks operands vertically; all must share a column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumericError> {
        let first = parts.first().ok_or(NumericError::EmptyInput { op: "concat_rows" })?;
        let cols = self.nodes[first.0].value.cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let m = &self.nodes[p.0].value;
            if m.cols() != cols {
                return Err(mismatch("concat_rows", &self.nodes[first.0].value, m));
            }
            rows += m.rows();
            data.extend_from_slice(m.as_slice());
        }
        let value = Matrix::from_vec(rows, cols, data)?;
        self.push("concat_rows", value, Op::ConcatRows(parts.to_vec()))
    }

    /// Places operands side by side; all must share a row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericError> {
        let first = parts.first().ok_or(NumericError::EmptyInput { op: "concat_cols" })?;
        let rows = self.nodes[first.0].value.rows();
        for p in parts {
            let m = &self.nodes[p.0].value;
            if m.rows() != rows {
                return Err(mismatch("concat_cols", &self.nodes[first.0].value, m));
            }
        }
        let cols: usize = parts.iter().map(|p| self.nodes[p.0].value.cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.nodes[p.0].value.row(r));
            }
        }
        let value = Matrix::from_vec(rows, cols, data)?;
        self.push("concat_cols", value, Op::ConcatCols(parts.to_vec()))
    }

    /// Left-multiplies by a fixed sparse matrix.
    pub fn sparse_matmul(&mut self, sparse: Arc<CsrMatrix>, a: Var) -> Result<Var, NumericError> {
        let value = sparse.mul_dense(&self.nodes[a.0].value)?;
        self.push("sparse_matmul", value, Op::Sparse(a, sparse))
    }

    /// Replays the tape in reverse from a scalar output and returns the
    /// gradient of every parameter leaf the output depends on.
    pub fn backward(&mut self, output: Var) -> Result<Gradients, NumericError> {
        if self.consumed {
            return Err(NumericError::TapeConsumed);
        }
        self.consumed = true;
        let out = &self.nodes[output.0].value;
        if out.shape() != (1, 1) {
            return Err(NumericError::NotScalar {
                rows: out.rows(),
                cols: out.cols(),
            });
        }
        let mut adj: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[output.0] = Some(Matrix::scalar(1.0));
        for idx in (0..=output.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            if self.nodes[idx].is_param {
                adj[idx] = Some(g);
                continue;
            }
            self.propagate(idx, &g, &mut adj);
        }
        let mut grads = HashMap::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            if !node.is_param {
                continue;
            }
            if let Some(g) = adj[idx].take() {
                if !g.is_finite() {
                    return Err(NumericError::NonFiniteGradient);
                }
                grads.insert(Var(idx), g);
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &Matrix, adj: &mut [Option<Matrix>]) {
        let nodes = &self.nodes;
        let val = |v: &Var| &nodes[v.0].value;
        let wants = |v: &Var| nodes[v.0].needs_grad;
        match &nodes[idx].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accumulate(adj, nodes, *a, g, 1.0);
                accumulate(adj, nodes, *b, g, 1.0);
            }
            Op::Sub(a, b) => {
                accumulate(adj, nodes, *a, g, 1.0);
                accumulate(adj, nodes, *b, g, -1.0);
            }
            Op::Mul(a, b) => {
                if wants(a) {
                    accumulate_owned(adj, nodes, *a, zip(g, val(b), |g, y| g * y));
                }
                if wants(b) {
                    accumulate_owned(adj, nodes, *b, zip(g, val(a), |g, x| g * x));
                }
            }
            Op::Div(a, b) => {
                if wants(a) {
                    accumulate_owned(adj, nodes, *a, zip(g, val(b), |g, y| g / y));
                }
                if wants(b) {
                    let out = &nodes[idx].value;
                    // d(x/y)/dy = -(x/y)/y
                    let gy = zip3(g, out, val(b), |g, q, y| -g * q / y);
                    accumulate_owned(adj, nodes, *b, gy);
                }
            }
            Op::Scale(a, s) => accumulate(adj, nodes, *a, g, *s),
            Op::MatMul(a, b) => {
                if wants(a) {
                    let grad = slot(adj, nodes, *a);
                    gemm(g, false, val(b), true, grad, 1.0, 1.0);
                }
                if wants(b) {
                    let grad = slot(adj, nodes, *b);
                    gemm(val(a), true, g, false, grad, 1.0, 1.0);
                }
            }
            Op::AddRow(a, row) => {
                accumulate(adj, nodes, *a, g, 1.0);
                if wants(row) {
                    let grad = slot(adj, nodes, *row);
                    for i in 0..g.rows() {
                        for (o, v) in grad.as_mut_slice().iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                }
            }
            Op::MulCol(a, col) => {
                if wants(a) {
                    let c = val(col);
                    let mut ga = g.clone();
                    for i in 0..ga.rows() {
                        let s = c.as_slice()[i];
                        for o in ga.row_mut(i) {
                            *o *= s;
                        }
                    }
                    accumulate_owned(adj, nodes, *a, ga);
                }
                if wants(col) {
                    let x = val(a);
                    let data = (0..x.rows())
                        .map(|i| x.row(i).iter().zip(g.row(i)).map(|(p, q)| p * q).sum())
                        .collect();
                    accumulate_owned(adj, nodes, *col, Matrix::column(data));
                }
            }
            Op::Sigmoid(a) => {
                let y = &nodes[idx].value;
                accumulate_owned(adj, nodes, *a, zip(g, y, |g, y| g * y * (1.0 - y)));
            }
            Op::LogSigmoid(a) => {
                accumulate_owned(adj, nodes, *a, zip(g, val(a), |g, x| g * sigmoid(-x)))
            }
            Op::Floor(a, min) => accumulate_owned(
                adj,
                nodes,
                *a,
                zip(g, val(a), |g, x| if x > *min { g } else { 0.0 }),
            ),
            Op::Log(a) => accumulate_owned(adj, nodes, *a, zip(g, val(a), |g, x| g / x)),
            Op::Sum(a) => {
                let s = g.as_slice()[0];
                let x = val(a);
                accumulate_owned(adj, nodes, *a, Matrix::filled(x.rows(), x.cols(), s));
            }
            Op::Dot(a, b) => {
                let s = g.as_slice()[0];
                accumulate(adj, nodes, *a, val(b), s);
                accumulate(adj, nodes, *b, val(a), s);
            }
            Op::RowDot(a, b) => {
                for (target, other) in [(a, b), (b, a)] {
                    if wants(target) {
                        let mut grad = val(other).clone();
                        for i in 0..grad.rows() {
                            let s = g.as_slice()[i];
                            for o in grad.row_mut(i) {
                                *o *= s;
                            }
                        }
                        accumulate_owned(adj, nodes, *target, grad);
                    }
                }
            }
            Op::Norm(a) => {
                let n = nodes[idx].value.as_slice()[0];
                if n > 0.0 {
                    accumulate(adj, nodes, *a, val(a), g.as_slice()[0] / n);
                }
            }
            Op::RowNorm(a) => {
                let norms = &nodes[idx].value;
                let mut grad = val(a).clone();
                for i in 0..grad.rows() {
                    let n = norms.as_slice()[i];
                    let s = if n > 0.0 { g.as_slice()[i] / n } else { 0.0 };
                    for o in grad.row_mut(i) {
                        *o *= s;
                    }
                }
                accumulate_owned(adj, nodes, *a, grad);
            }
            Op::Softmax(a, offsets) => {
                let y = nodes[idx].value.as_slice();
                let gs = g.as_slice();
                let mut grad = vec![0.0; y.len()];
                for w in offsets.windows(2) {
                    let inner: f64 = (w[0]..w[1]).map(|i| gs[i] * y[i]).sum();
                    for i in w[0]..w[1] {
                        grad[i] = y[i] * (gs[i] - inner);
                    }
                }
                accumulate_owned(adj, nodes, *a, Matrix::column(grad));
            }
            Op::SegmentSum(a, offsets) => {
                let grad = slot(adj, nodes, *a);
                for (s, w) in offsets.windows(2).enumerate() {
                    for i in w[0]..w[1] {
                        for (o, v) in grad.row_mut(i).iter_mut().zip(g.row(s)) {
                            *o += v;
                        }
                    }
                }
            }
            Op::Gather(a, indices) => {
                let grad = slot(adj, nodes, *a);
                for (r, &i) in indices.iter().enumerate() {
                    for (o, v) in grad.row_mut(i).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for p in parts {
                    let m = val(p);
                    if wants(p) {
                        let piece = Matrix::from_vec(
                            m.rows(),
                            m.cols(),
                            g.as_slice()[start * m.cols()..(start + m.rows()) * m.cols()].to_vec(),
                        )
                        .expect("slice matches part shape");
                        accumulate_owned(adj, nodes, *p, piece);
                    }
                    start += m.rows();
                }
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for p in parts {
                    let m = val(p);
                    if wants(p) {
                        let piece = Matrix::from_fn(m.rows(), m.cols(), |r, c| g.get(r, start + c));
                        accumulate_owned(adj, nodes, *p, piece);
                    }
                    start += m.cols();
                }
            }
            Op::Sparse(a, sparse) => {
                if wants(a) {
                    let grad = slot(adj, nodes, *a);
                    sparse.transpose_mul_into(g, grad);
                }
            }
        }
    }
}

fn slot<'a>(adj: &'a mut [Option<Matrix>], nodes: &[Node], v: Var) -> &'a mut Matrix {
    adj[v.0].get_or_insert_with(|| {
        let (r, c) = nodes[v.0].value.shape();
        Matrix::zeros(r, c)
    })
}

fn accumulate(adj: &mut [Option<Matrix>], nodes: &[Node], v: Var, g: &Matrix, scale: f64) {
    if !nodes[v.0].needs_grad {
        return;
    }
    match &mut adj[v.0] {
        Some(existing) => existing.add_scaled(g, scale),
        empty => {
            let mut m = g.clone();
            if scale != 1.0 {
                m.scale_in_place(scale);
            }
            *empty = Some(m);
        }
    }
}

fn accumulate_owned(adj: &mut [Option<Matrix>], nodes: &[Node], v: Var, g: Matrix) {
    if !nodes[v.0].needs_grad {
        return;
    }
    match &mut adj[v.0] {
        Some(existing) => existing.add_scaled(&g, 1.0),
        empty => *empty = Some(g),
    }
}

fn zip(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| f(x, y)).collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

fn zip3(a: &Matrix, b: &Matrix, c: &Matrix, f: impl Fn(f64, f64, f64) -> f64) -> Matrix {
    let data = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .zip(c.as_slice())
        .map(|((&x, &y), &z)| f(x, y, z))
        .collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_value() {
        let mut t = Tape::new();
        let a = t.constant(Matrix::column(vec![1.0, 2.0]));
        let b = t.constant(Matrix::column(vec![3.0, 4.0]));
        let d = t.dot(a, b).unwrap();
        assert_eq!(t.value(d).item().unwrap(), 11.0);
    }

    #[test]
    fn softmax_value() {
        let mut t = Tape::new();
        let a = t.constant(Matrix::column(vec![0.0, 0.0]));
        let s = t.softmax(a).unwrap();
        assert_eq!(t.value(s).as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn sigmoid_value_and_gradient() {
        let mut t = Tape::new();
        let x = t.param(Matrix::scalar(0.0));
        let y = t.sigmoid(x).unwrap();
        assert_eq!(t.value(y).item().unwrap(), 0.5);
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item().unwrap(), 0.25);
    }

    #[test]
    fn square_gradient() {
        let mut t = Tape::new();
        let x = t.param(Matrix::scalar(3.0));
        let y = t.mul(x, x).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item().unwrap(), 6.0);
    }

    #[test]
    fn second_backward_is_rejected() {
        let mut t = Tape::new();
        let x = t.param(Matrix::scalar(1.0));
        let y = t.sum(x).unwrap();
        t.backward(y).unwrap();
        assert!(matches!(t.backward(y), Err(NumericError::TapeConsumed)));
        assert!(matches!(t.sum(x), Err(NumericError::TapeConsumed)));
    }

    #[test]
    fn non_scalar_output_rejected() {
        let mut t = Tape::new();
        let x = t.param(Matrix::column(vec![1.0, 2.0]));
        let y = t.scale(x, 2.0).unwrap();
        assert!(matches!(t.backward(y), Err(NumericError::NotScalar { rows: 2, cols: 1 })));
    }

    #[test]
    fn non_finite_intermediate_rejected() {
        let mut t = Tape::new();
        let x = t.constant(Matrix::scalar(0.0));
        assert!(matches!(t.log(x), Err(NumericError::NonFinite { op: "log" })));
    }

    #[test]
    fn dimension_mismatch_reported() {
        let mut t = Tape::new();
        let a = t.constant(Matrix::zeros(2, 2));
        let b = t.constant(Matrix::zeros(3, 2));
        assert!(matches!(t.add(a, b), Err(NumericError::DimensionMismatch { op: "add", .. })));
        assert!(matches!(t.matmul(a, b), Err(NumericError::DimensionMismatch { .. })));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::new();
        let x = t.param(Matrix::scalar(2.0));
        let c = t.constant(Matrix::scalar(5.0));
        let y = t.mul(x, c).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item().unwrap(), 5.0);
        assert!(g.get(c).is_none());
    }

    #[test]
    fn segment_offsets_validated() {
        let mut t = Tape::new();
        let x = t.param(Matrix::column(vec![1.0, 2.0, 3.0]));
        assert!(t.segment_softmax(x, Arc::from(vec![0, 2])).is_err());
        assert!(t.segment_sum(x, Arc::from(vec![0, 2, 1, 3])).is_err());
        let s = t.segment_softmax(x, Arc::from(vec![0, 1, 3])).unwrap();
        let v = t.value(s).as_slice().to_vec();
        assert_eq!(v[0], 1.0);
        assert!((v[1] + v[2] - 1.0).abs() < 1e-15);
    }
}
