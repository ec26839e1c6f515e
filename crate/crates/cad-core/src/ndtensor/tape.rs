//! Wengert tape: operations are recorded during the forward pass and
//! replayed in reverse for exact gradients. A tape is built per forward
//! pass and consumed by a single backward call.

use super::tensor::{matmul_nn, matmul_nt, matmul_tn, Tensor};
use crate::error::{CadError, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MatMul(usize, usize),
    /// [B,m] + [1,m], bias broadcast over rows.
    AddRow(usize, usize),
    Silu(usize),
    Sin(usize),
    ConcatCols(usize, usize),
    /// Rows of `table` selected by index; duplicate indices accumulate.
    GatherRows { table: usize, idx: Vec<usize> },
    /// [B,m] → [B,1], per-row sum of squares.
    RowSumSq(usize),
    /// [B,m] → [B,1], per-row Euclidean norm (subgradient 0 at 0).
    RowNorm(usize),
    Sum(usize),
    Mean(usize),
    Scale(usize, f64),
}

struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Result of a backward pass: one gradient slot per tape node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if any path reached it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient with zero-fill for unreached leaves.
    pub fn wrt_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros_like(like))
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Record an input. Constants and parameters are both leaves; whether a
    /// leaf receives a gradient depends only on the paths that reach it.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.shape(), vb.shape(), "add shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(va.shape().to_vec(), data);
        self.push(Op::Add(a.0, b.0), value)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.shape(), vb.shape(), "sub shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x - y).collect();
        let value = Tensor::new(va.shape().to_vec(), data);
        self.push(Op::Sub(a.0, b.0), value)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(va.shape(), vb.shape(), "mul shape mismatch");
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(va.shape().to_vec(), data);
        self.push(Op::Mul(a.0, b.0), value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = matmul_nn(&self.nodes[a.0].value, &self.nodes[b.0].value);
        self.push(Op::MatMul(a.0, b.0), value)
    }

    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[bias.0].value);
        let cols = va.cols();
        assert_eq!(vb.len(), cols, "add_row bias length mismatch");
        let mut data = va.data().to_vec();
        for row in data.chunks_mut(cols) {
            for (x, b) in row.iter_mut().zip(vb.data()) {
                *x += b;
            }
        }
        let value = Tensor::new(va.shape().to_vec(), data);
        self.push(Op::AddRow(a.0, bias.0), value)
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.map(|x| x * sigmoid(x));
        self.push(Op::Silu(a.0), value)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.map(f64::sin);
        self.push(Op::Sin(a.0), value)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let rows = va.rows();
        assert_eq!(rows, vb.rows(), "concat_cols row mismatch");
        let (ca, cb) = (va.cols(), vb.cols());
        let mut data = Vec::with_capacity(rows * (ca + cb));
        for i in 0..rows {
            data.extend_from_slice(va.row(i));
            data.extend_from_slice(vb.row(i));
        }
        let value = Tensor::matrix(rows, ca + cb, data);
        self.push(Op::ConcatCols(a.0, b.0), value)
    }

    pub fn gather_rows(&mut self, table: Var, idx: Vec<usize>) -> Var {
        let vt = &self.nodes[table.0].value;
        let cols = vt.cols();
        let rows = vt.rows();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in &idx {
            assert!(i < rows, "gather index {} out of {} rows", i, rows);
            data.extend_from_slice(vt.row(i));
        }
        let value = Tensor::matrix(idx.len(), cols, data);
        self.push(Op::GatherRows { table: table.0, idx }, value)
    }

    pub fn row_sum_sq(&mut self, a: Var) -> Var {
        let va = &self.nodes[a.0].value;
        let data = (0..va.rows())
            .map(|i| va.row(i).iter().map(|v| v * v).sum())
            .collect();
        let value = Tensor::matrix(va.rows(), 1, data);
        self.push(Op::RowSumSq(a.0), value)
    }

    pub fn row_norm(&mut self, a: Var) -> Var {
        let va = &self.nodes[a.0].value;
        let data = (0..va.rows())
            .map(|i| va.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let value = Tensor::matrix(va.rows(), 1, data);
        self.push(Op::RowNorm(a.0), value)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.nodes[a.0].value.data().iter().sum());
        self.push(Op::Sum(a.0), value)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let va = &self.nodes[a.0].value;
        let value = Tensor::scalar(va.data().iter().sum::<f64>() / va.len() as f64);
        self.push(Op::Mean(a.0), value)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.nodes[a.0].value.map(|x| k * x);
        self.push(Op::Scale(a.0, k), value)
    }

    /// Reverse pass from a scalar loss. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let loss_t = &self.nodes[loss.0].value;
        if !loss_t.is_scalar() {
            return Err(CadError::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_t.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::new(loss_t.shape().to_vec(), vec![1.0]));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].clone() else { continue };
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.map(|v| -v));
                }
                Op::Mul(a, b) => {
                    let ga = ewise(&g, &self.nodes[*b].value, |gv, o| gv * o);
                    let gb = ewise(&g, &self.nodes[*a].value, |gv, o| gv * o);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::MatMul(a, b) => {
                    let ga = matmul_nt(&g, &self.nodes[*b].value);
                    let gb = matmul_tn(&self.nodes[*a].value, &g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRow(a, bias) => {
                    let cols = g.cols();
                    let mut gb = vec![0.0; cols];
                    for row in g.data().chunks(cols) {
                        for (acc, v) in gb.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                    let bias_shape = self.nodes[*bias].value.shape().to_vec();
                    accumulate(&mut grads, *a, g);
                    accumulate(&mut grads, *bias, Tensor::new(bias_shape, gb));
                }
                Op::Silu(a) => {
                    let ga = ewise(&g, &self.nodes[*a].value, |gv, x| {
                        let s = sigmoid(x);
                        gv * (s * (1.0 + x * (1.0 - s)))
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sin(a) => {
                    let ga = ewise(&g, &self.nodes[*a].value, |gv, x| gv * x.cos());
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatCols(a, b) => {
                    let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let (ca, cb) = (va.cols(), vb.cols());
                    let rows = va.rows();
                    let mut ga = Vec::with_capacity(rows * ca);
                    let mut gb = Vec::with_capacity(rows * cb);
                    for i in 0..rows {
                        let row = g.row(i);
                        ga.extend_from_slice(&row[..ca]);
                        gb.extend_from_slice(&row[ca..]);
                    }
                    accumulate(&mut grads, *a, Tensor::matrix(rows, ca, ga));
                    accumulate(&mut grads, *b, Tensor::matrix(rows, cb, gb));
                }
                Op::GatherRows { table, idx } => {
                    let vt = &self.nodes[*table].value;
                    let cols = vt.cols();
                    let mut gt = Tensor::zeros_like(vt);
                    for (r, &i) in idx.iter().enumerate() {
                        let src = g.row(r);
                        let dst = &mut gt.data_mut()[i * cols..(i + 1) * cols];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                    accumulate(&mut grads, *table, gt);
                }
                Op::RowSumSq(a) => {
                    let va = &self.nodes[*a].value;
                    let cols = va.cols();
                    let mut ga = va.data().to_vec();
                    for (r, chunk) in ga.chunks_mut(cols).enumerate() {
                        let gr = g.data()[r];
                        for v in chunk.iter_mut() {
                            *v *= 2.0 * gr;
                        }
                    }
                    accumulate(&mut grads, *a, Tensor::new(va.shape().to_vec(), ga));
                }
                Op::RowNorm(a) => {
                    let va = &self.nodes[*a].value;
                    let norms = &self.nodes[i].value;
                    let cols = va.cols();
                    let mut ga = va.data().to_vec();
                    for (r, chunk) in ga.chunks_mut(cols).enumerate() {
                        let n = norms.data()[r];
                        let factor = if n > 0.0 { g.data()[r] / n } else { 0.0 };
                        for v in chunk.iter_mut() {
                            *v *= factor;
                        }
                    }
                    accumulate(&mut grads, *a, Tensor::new(va.shape().to_vec(), ga));
                }
                Op::Sum(a) => {
                    let gs = g.scalar_value();
                    let ga = self.nodes[*a].value.map(|_| gs);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Mean(a) => {
                    let va = &self.nodes[*a].value;
                    let gs = g.scalar_value() / va.len() as f64;
                    accumulate(&mut grads, *a, va.map(|_| gs));
                }
                Op::Scale(a, k) => {
                    let k = *k;
                    accumulate(&mut grads, *a, g.map(|v| k * v));
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], node: usize, g: Tensor) {
    match &mut grads[node] {
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        slot => *slot = Some(g),
    }
}

fn ewise(g: &Tensor, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = g
        .data()
        .iter()
        .zip(other.data())
        .map(|(&gv, &ov)| f(gv, ov))
        .collect();
    Tensor::new(g.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_derivative() {
        // f(x) = x·x at x = 3 → df/dx = 6
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = tape.mul(x, x);
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.wrt(x).unwrap().scalar_value(), 6.0);
    }

    #[test]
    fn sin_derivative_at_zero() {
        // f(x) = sin(x) at x = 0 → df/dx = 1
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(0.0));
        let y = tape.sin(x);
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.wrt(x).unwrap().scalar_value(), 1.0);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::matrix(1, 2, vec![1.0, 2.0]));
        let y = tape.silu(x);
        assert!(tape.backward(y).is_err());
    }

    #[test]
    fn leaf_not_reached_has_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(2.0));
        let unused = tape.leaf(Tensor::scalar(5.0));
        let y = tape.mul(x, x);
        let grads = tape.backward(y).unwrap();
        assert!(grads.wrt(unused).is_none());
        let z = grads.wrt_or_zeros(unused, &Tensor::scalar(0.0));
        assert_eq!(z.scalar_value(), 0.0);
    }

    fn finite_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += h;
                xm[i] -= h;
                (f(&xp) - f(&xm)) / (2.0 * h)
            })
            .collect()
    }

    /// Every primitive against central finite differences on random-ish
    /// inputs in [−2, 2].
    #[test]
    fn primitives_match_finite_differences() {
        let xs: Vec<f64> = (0..6).map(|i| -2.0 + 4.0 * (i as f64 + 0.37) / 6.0).collect();
        let ws: Vec<f64> = (0..6).map(|i| -2.0 + 4.0 * (i as f64 + 0.81) / 6.0).collect();

        type LossFn = Box<dyn Fn(&[f64], &[f64]) -> f64>;
        type BuildFn = Box<dyn Fn(&mut Tape, Var, Var) -> Var>;
        let cases: Vec<(&str, BuildFn, LossFn)> = vec![
            (
                "add+mul+mean",
                Box::new(|t: &mut Tape, a, b| {
                    let s = t.add(a, b);
                    let p = t.mul(s, s);
                    t.mean(p)
                }),
                Box::new(|x: &[f64], w: &[f64]| {
                    x.iter()
                        .zip(w)
                        .map(|(a, b)| (a + b) * (a + b))
                        .sum::<f64>()
                        / x.len() as f64
                }),
            ),
            (
                "matmul+silu+sum",
                Box::new(|t: &mut Tape, a, b| {
                    let m = t.matmul(a, b);
                    let s = t.silu(m);
                    t.sum(s)
                }),
                Box::new(|x: &[f64], w: &[f64]| {
                    // [2,3] × [3,2]
                    let mut total = 0.0;
                    for i in 0..2 {
                        for j in 0..2 {
                            let v: f64 = (0..3).map(|p| x[i * 3 + p] * w[p * 2 + j]).sum();
                            total += v / (1.0 + (-v).exp());
                        }
                    }
                    total
                }),
            ),
            (
                "sub+rownorm+mean",
                Box::new(|t: &mut Tape, a, b| {
                    let d = t.sub(a, b);
                    let n = t.row_norm(d);
                    t.mean(n)
                }),
                Box::new(|x: &[f64], w: &[f64]| {
                    let mut total = 0.0;
                    for i in 0..2 {
                        let mut sq = 0.0;
                        for p in 0..3 {
                            let d = x[i * 3 + p] - w[i * 3 + p];
                            sq += d * d;
                        }
                        total += sq.sqrt();
                    }
                    total / 2.0
                }),
            ),
            (
                "sin+rowsumsq+sum+addrow",
                Box::new(|t: &mut Tape, a, b| {
                    let s = t.sin(a);
                    let biased = t.add_row(s, b);
                    let sq = t.row_sum_sq(biased);
                    t.sum(sq)
                }),
                Box::new(|x: &[f64], w: &[f64]| {
                    let mut total = 0.0;
                    for i in 0..2 {
                        for p in 0..3 {
                            let v = x[i * 3 + p].sin() + w[p];
                            total += v * v;
                        }
                    }
                    total
                }),
            ),
        ];

        for (name, build, reference) in cases {
            let wlen = if name == "matmul+silu+sum" { 6 } else if name == "sin+rowsumsq+sum+addrow" { 3 } else { 6 };
            let w = &ws[..wlen];
            let run = |xv: &[f64]| -> f64 { reference(xv, w) };
            let fd = finite_diff(run, &xs, 1e-5);

            let mut tape = Tape::new();
            let a = tape.leaf(Tensor::matrix(2, 3, xs.clone()));
            let b = match name {
                "matmul+silu+sum" => tape.leaf(Tensor::matrix(3, 2, w.to_vec())),
                "sin+rowsumsq+sum+addrow" => tape.leaf(Tensor::matrix(1, 3, w.to_vec())),
                _ => tape.leaf(Tensor::matrix(2, 3, w.to_vec())),
            };
            let loss = build(&mut tape, a, b);
            let grads = tape.backward(loss).unwrap();
            let ga = grads.wrt(a).unwrap();
            for (i, (&g, &f)) in ga.data().iter().zip(&fd).enumerate() {
                let denom = f.abs().max(1e-6);
                assert!(
                    ((g - f) / denom).abs() < 1e-4,
                    "{name}: entry {i}: reverse {g} vs fd {f}"
                );
            }
        }
    }

    #[test]
    fn gather_rows_accumulates_duplicates() {
        let mut tape = Tape::new();
        let table = tape.leaf(Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let picked = tape.gather_rows(table, vec![1, 1, 2]);
        let s = tape.sum(picked);
        let grads = tape.backward(s).unwrap();
        let gt = grads.wrt(table).unwrap();
        assert_eq!(gt.data(), &[0.0, 0.0, 2.0, 2.0, 1.0, 1.0]);
    }
}
