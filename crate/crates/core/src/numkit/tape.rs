//! Reverse-mode differentiation over a recorded sequence of matrix operations.
//!
//! A [`Tape`] records every primitive as it is evaluated. Because a node can
//! only reference nodes recorded before it, the recording order is already a
//! topological order and the backward pass simply walks it in reverse.

use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
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
    /// Adds a `1 × n` row to every row of the first operand.
    AddRow(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Abs(Var),
    Square(Var),
    /// Euclidean norm of each row, as an `r × 1` column.
    RowNorm(Var),
    SumAll(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    /// Mean binary cross-entropy of logits against fixed targets.
    BceWithLogits(Var, Matrix),
}

struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input. Parameters and constants are both leaves; which
    /// leaves get updated is up to the caller.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ar, ac) = self.shape(a);
        let (rr, rc) = self.shape(row);
        if rr != 1 || rc != ac {
            return Err(Error::shape(
                "add_row",
                format!("1x{ac}"),
                format!("{rr}x{rc}"),
            ));
        }
        let bias = self.value(row).data().to_vec();
        let mut value = self.value(a).clone();
        for r in 0..ar {
            for (v, b) in value.row_mut(r).iter_mut().zip(&bias) {
                *v += b;
            }
        }
        Ok(self.push(value, Op::AddRow(a, row)))
    }

    /// `alpha * a + beta`
    pub fn affine(&mut self, a: Var, alpha: f64, beta: f64) -> Var {
        let value = self.value(a).map(|v| alpha * v + beta);
        self.push(value, Op::Affine(a, alpha))
    }

    pub fn scale(&mut self, a: Var, alpha: f64) -> Var {
        self.affine(a, alpha, 0.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::abs);
        self.push(value, Op::Abs(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v * v);
        self.push(value, Op::Square(a))
    }

    pub fn row_norm(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let norms = m
            .row_iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        self.push(Matrix::column_vector(norms), Op::RowNorm(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        self.push(value, Op::SumAll(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Matrix::hstack(&mats)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (_, cols) = self.shape(a);
        if start + len > cols {
            return Err(Error::shape(
                "slice_cols",
                format!("<= {cols} cols"),
                start + len,
            ));
        }
        let value = self.value(a).slice_cols(start, len);
        Ok(self.push(value, Op::SliceCols(a, start)))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, _) = self.shape(a);
        if start + len > rows {
            return Err(Error::shape(
                "slice_rows",
                format!("<= {rows} rows"),
                start + len,
            ));
        }
        let value = self.value(a).slice_rows(start, len);
        Ok(self.push(value, Op::SliceRows(a, start)))
    }

    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let (rows, _) = self.shape(a);
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::shape("gather_rows", format!("row < {rows}"), bad));
        }
        let value = self.value(a).select_rows(indices);
        Ok(self.push(value, Op::GatherRows(a, indices.to_vec())))
    }

    /// Mean over entries of the numerically stable logistic loss
    /// `max(x, 0) - x t + ln(1 + e^{-|x|})`.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Matrix) -> Result<Var> {
        let x = self.value(logits);
        if x.shape() != targets.shape() {
            return Err(Error::shape(
                "bce_with_logits",
                format!("{:?}", x.shape()),
                format!("{:?}", targets.shape()),
            ));
        }
        let n = x.len().max(1) as f64;
        let total: f64 = x
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&x, &t)| x.max(0.0) - x * t + (-x.abs()).exp().ln_1p())
            .sum();
        Ok(self.push(
            Matrix::scalar(total / n),
            Op::BceWithLogits(logits, targets),
        ))
    }

    /// `a + mask ∘ (b - a)`: rows with mask 1 take `b`, rows with mask 0 keep `a`.
    pub fn blend(&mut self, a: Var, b: Var, mask: Var) -> Result<Var> {
        let diff = self.sub(b, a)?;
        let gated = self.mul(mask, diff)?;
        self.add(a, gated)
    }

    /// Runs the backward pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<'_>> {
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss node, got {r}x{c}"
            )));
        }
        let mut grads: Vec<Option<Matrix>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b))?;
                    let gb = self.value(*a).t_matmul(&g)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.scale(-1.0));
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    let ga = g.hadamard(self.value(*b))?;
                    let gb = g.hadamard(self.value(*a))?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRow(a, row) => {
                    accumulate(&mut grads, *row, g.column_sums());
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Affine(a, alpha) => accumulate(&mut grads, *a, g.scale(*alpha)),
                Op::Sigmoid(a) => {
                    let ga = g.zip_with(&node.value, "sigmoid'", |g, y| g * y * (1.0 - y))?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = g.zip_with(&node.value, "tanh'", |g, y| g * (1.0 - y * y))?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let ga = g.zip_with(
                        self.value(*a),
                        "relu'",
                        |g, x| if x > 0.0 { g } else { 0.0 },
                    )?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::Abs(a) => {
                    let ga = g.zip_with(self.value(*a), "abs'", |g, x| {
                        if x > 0.0 {
                            g
                        } else if x < 0.0 {
                            -g
                        } else {
                            0.0
                        }
                    })?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::Square(a) => {
                    let ga = g.zip_with(self.value(*a), "square'", |g, x| 2.0 * g * x)?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::RowNorm(a) => {
                    let x = self.value(*a);
                    let mut ga = Matrix::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        let norm = node.value.get(r, 0);
                        // Subgradient 0 at the origin.
                        if norm > 0.0 {
                            let scale = g.get(r, 0) / norm;
                            for (o, v) in ga.row_mut(r).iter_mut().zip(x.row(r)) {
                                *o = scale * v;
                            }
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SumAll(a) => {
                    let (r, c) = self.shape(*a);
                    accumulate(&mut grads, *a, Matrix::filled(r, c, g.get(0, 0)));
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let width = self.shape(*p).1;
                        accumulate(&mut grads, *p, g.slice_cols(start, width));
                        start += width;
                    }
                }
                Op::SliceCols(a, start) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Matrix::zeros(r, c);
                    for i in 0..r {
                        ga.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SliceRows(a, start) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Matrix::zeros(r, c);
                    ga.data_mut()[start * c..(start + g.rows()) * c].copy_from_slice(g.data());
                    accumulate(&mut grads, *a, ga);
                }
                Op::GatherRows(a, indices) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Matrix::zeros(r, c);
                    for (k, &i) in indices.iter().enumerate() {
                        for (o, v) in ga.row_mut(i).iter_mut().zip(g.row(k)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::BceWithLogits(a, targets) => {
                    let x = self.value(*a);
                    let scale = g.get(0, 0) / x.len().max(1) as f64;
                    let ga = x.zip_with(targets, "bce'", |x, t| scale * (sigmoid(x) - t))?;
                    accumulate(&mut grads, *a, ga);
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads, tape: self })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, x) in existing.data_mut().iter_mut().zip(g.data()) {
                *e += x;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients<'t> {
    grads: Vec<Option<Matrix>>,
    tape: &'t Tape,
}

impl Gradients<'_> {
    /// Gradient of the loss with respect to `v`; zero when `v` does not reach the loss.
    pub fn wrt(&self, v: Var) -> Matrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.tape.shape(v);
                Matrix::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var) -> Matrix {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.tape.shape(v);
                Matrix::zeros(r, c)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_diff(f: impl Fn(&Matrix) -> f64, x: &Matrix, h: f64) -> Matrix {
        let mut g = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.len() {
            let mut plus = x.clone();
            plus.data_mut()[i] += h;
            let mut minus = x.clone();
            minus.data_mut()[i] -= h;
            g.data_mut()[i] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        g
    }

    fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
        let diff = a.sub(b).unwrap().frobenius_norm();
        diff / a.frobenius_norm().max(b.frobenius_norm()).max(1e-12)
    }

    #[test]
    fn sum_of_parameters_has_unit_gradient() {
        let mut tape = Tape::new();
        let p = tape.leaf(Matrix::row_vector(vec![0.3, -1.0, 2.5]));
        let loss = tape.sum(p);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(p), Matrix::row_vector(vec![1.0; 3]));
    }

    #[test]
    fn unused_parameter_gets_exact_zero() {
        let mut tape = Tape::new();
        let used = tape.leaf(Matrix::row_vector(vec![1.0, 2.0]));
        let unused = tape.leaf(Matrix::row_vector(vec![5.0, 6.0, 7.0]));
        let sq = tape.square(used);
        let loss = tape.sum(sq);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(unused), Matrix::zeros(1, 3));
        assert_eq!(grads.wrt(used), Matrix::row_vector(vec![2.0, 4.0]));
    }

    #[test]
    fn non_scalar_loss_is_a_contract_error() {
        let mut tape = Tape::new();
        let p = tape.leaf(Matrix::zeros(2, 2));
        assert!(matches!(tape.backward(p), Err(Error::Contract(_))));
    }

    #[test]
    fn squared_norm_of_linear_map_matches_finite_differences() {
        let x = Matrix::from_fn(3, 1, |r, _| 0.7 - r as f64 * 0.4);
        let w = Matrix::from_fn(4, 3, |r, c| ((r * 3 + c) as f64 * 0.37).sin());
        let loss_of =
            |w: &Matrix| -> f64 { w.matmul(&x).unwrap().data().iter().map(|v| v * v).sum() };

        let mut tape = Tape::new();
        let wv = tape.leaf(w.clone());
        let xv = tape.leaf(x.clone());
        let y = tape.matmul(wv, xv).unwrap();
        let sq = tape.square(y);
        let loss = tape.sum(sq);
        let analytic = tape.backward(loss).unwrap().wrt(wv);
        let numeric = finite_diff(loss_of, &w, 1e-5);
        assert!(rel_err(&analytic, &numeric) < 1e-4);
    }

    #[test]
    fn composite_ops_match_finite_differences() {
        let a0 = Matrix::from_fn(4, 3, |r, c| ((r * 3 + c) as f64 * 0.71).cos() * 0.9);
        let b0 = Matrix::from_fn(4, 3, |r, c| ((r + 2 * c) as f64 * 0.53).sin());
        let targets = Matrix::from_fn(4, 1, |r, _| (r % 2) as f64);
        let build = |tape: &mut Tape, a: Var, b: Var| -> Var {
            let bias = tape.leaf(Matrix::row_vector(vec![0.1, -0.2, 0.3]));
            let s = tape.add_row(a, bias).unwrap();
            let t = tape.tanh(s);
            let d = tape.sub(t, b).unwrap();
            let ad = tape.abs(d);
            let sg = tape.sigmoid(b);
            let cat = tape.concat_cols(&[ad, sg]).unwrap();
            let g = tape.gather_rows(cat, &[3, 0, 0, 2]).unwrap();
            let sl = tape.slice_cols(g, 1, 4).unwrap();
            let norms = tape.row_norm(sl);
            let logits = tape.affine(norms, 1.5, -1.0);
            let bce = tape.bce_with_logits(logits, targets.clone()).unwrap();
            let rows = tape.slice_rows(sl, 1, 2).unwrap();
            let m = tape.mul(rows, rows).unwrap();
            let ms = tape.mean(m);
            tape.add(bce, ms).unwrap()
        };
        let eval = |a: &Matrix, b: &Matrix| {
            let mut tape = Tape::new();
            let av = tape.leaf(a.clone());
            let bv = tape.leaf(b.clone());
            let out = build(&mut tape, av, bv);
            tape.value(out).get(0, 0)
        };
        let mut tape = Tape::new();
        let av = tape.leaf(a0.clone());
        let bv = tape.leaf(b0.clone());
        let out = build(&mut tape, av, bv);
        let grads = tape.backward(out).unwrap();
        let na = finite_diff(|a| eval(a, &b0), &a0, 1e-5);
        let nb = finite_diff(|b| eval(&a0, b), &b0, 1e-5);
        assert!(rel_err(&grads.wrt(av), &na) < 1e-4);
        assert!(rel_err(&grads.wrt(bv), &nb) < 1e-4);
    }
}
