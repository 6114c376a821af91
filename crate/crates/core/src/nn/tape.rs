//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters enter the tape through
//! [`Tape::param`], which deduplicates per `(params uid, index)` so a weight reused across
//! LSTM steps accumulates a single gradient. Binary element-wise ops broadcast any operand
//! dimension of size 1.

use std::collections::HashMap;

use super::params::Params;
use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Param,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    MatMul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Exp(Var),
    Ln(Var),
    Abs(Var),
    Sqrt(Var),
    Square(Var),
    Softplus(Var),
    Clamp(Var, f64, f64),
    SumAll(Var),
    SumRows(Var),
    SumCols(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    LogSoftmaxRows(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<(u64, usize), Var>,
}

/// Gradients of one scalar with respect to every node on the tape.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: HashMap<(u64, usize), Var>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    /// Gradient for every tensor of `params`, zeros for tensors that did not reach the loss.
    pub fn for_params(&self, params: &Params) -> Vec<Tensor> {
        params
            .tensors()
            .iter()
            .enumerate()
            .map(|(i, t)| match self.params.get(&(params.uid(), i)) {
                Some(v) => self.wrt(*v),
                None => Tensor::zeros(t.rows, t.cols),
            })
            .collect()
    }
}

fn bshape(a: (usize, usize), b: (usize, usize)) -> (usize, usize) {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            x
        } else if x == 1 {
            y
        } else {
            panic!("cannot broadcast {a:?} with {b:?}")
        }
    };
    (dim(a.0, b.0), dim(a.1, b.1))
}

#[inline]
fn bidx(t: &Tensor, r: usize, c: usize) -> usize {
    let rr = if t.rows == 1 { 0 } else { r };
    let cc = if t.cols == 1 { 0 } else { c };
    rr * t.cols + cc
}

fn broadcast_apply(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let (r, c) = bshape(a.shape(), b.shape());
    if a.shape() == b.shape() {
        return Tensor::from_vec(r, c, a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect());
    }
    let mut out = Tensor::zeros(r, c);
    for i in 0..r {
        for j in 0..c {
            out.data[i * c + j] = f(a.data[bidx(a, i, j)], b.data[bidx(b, i, j)]);
        }
    }
    out
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn scalar(&mut self, x: f64) -> Var {
        self.constant(Tensor::scalar(x))
    }

    pub fn param(&mut self, params: &Params, idx: usize) -> Var {
        let key = (params.uid(), idx);
        if let Some(v) = self.params.get(&key) {
            return *v;
        }
        let v = self.push(params.tensors()[idx].clone(), Op::Param);
        self.params.insert(key, v);
        v
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let value = broadcast_apply(self.value(a), self.value(b), f);
        self.push(value, op)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(a).map(f);
        self.push(value, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, |x| x * k, Op::Scale(a, k))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, |x| x + k, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Ln(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, f64::sqrt, Op::Sqrt(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, Op::Softplus(a))
    }

    /// Clamp with zero gradient outside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Column sums, `r x c -> 1 x c`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut out = Tensor::zeros(1, t.cols);
        for r in 0..t.rows {
            for (o, x) in out.data.iter_mut().zip(t.row_slice(r)) {
                *o += x;
            }
        }
        self.push(out, Op::SumRows(a))
    }

    /// Row sums, `r x c -> r x 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let out = Tensor::from_vec(t.rows, 1, (0..t.rows).map(|r| t.row_slice(r).iter().sum()).collect());
        self.push(out, Op::SumCols(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut off = 0;
        for p in parts {
            let t = self.value(*p);
            assert_eq!(t.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                out.data[r * cols + off..r * cols + off + t.cols].copy_from_slice(t.row_slice(r));
            }
            off += t.cols;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let t = self.value(a);
        assert!(start + len <= t.cols);
        let mut out = Tensor::zeros(t.rows, len);
        for r in 0..t.rows {
            out.data[r * len..(r + 1) * len].copy_from_slice(&t.row_slice(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols(a, start))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let t = self.value(*p);
            assert_eq!(t.cols, cols, "concat_rows col mismatch");
            data.extend_from_slice(&t.data);
            rows += t.rows;
        }
        self.push(Tensor::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let t = self.value(a);
        assert!(start + len <= t.rows);
        let out = Tensor::from_vec(len, t.cols, t.data[start * t.cols..(start + len) * t.cols].to_vec());
        self.push(out, Op::SliceRows(a, start))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut out = t.clone();
        for r in 0..t.rows {
            let row = t.row_slice(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            for c in 0..t.cols {
                out.data[r * t.cols + c] = row[c] - lse;
            }
        }
        self.push(out, Op::LogSoftmaxRows(a))
    }

    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.shape(loss), (1, 1), "backward expects a scalar loss");
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor>> = vec![None; n];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf | Op::Param => {}
                Op::Add(a, b) => {
                    self.acc_reduce(&mut grads, *a, &g);
                    self.acc_reduce(&mut grads, *b, &g);
                }
                Op::Sub(a, b) => {
                    self.acc_reduce(&mut grads, *a, &g);
                    let ng = g.map(|x| -x);
                    self.acc_reduce(&mut grads, *b, &ng);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga = mul_bcast(&g, vb, |gv, y| gv * y);
                    let gb = mul_bcast(&g, va, |gv, x| gv * x);
                    self.acc_reduce(&mut grads, *a, &ga);
                    self.acc_reduce(&mut grads, *b, &gb);
                }
                Op::Div(a, b) => {
                    let vb = self.value(*b);
                    let ga = mul_bcast(&g, vb, |gv, y| gv / y);
                    // d(a/b)/db = -out / b
                    let out = &node.value;
                    let tmp = Tensor::from_vec(g.rows, g.cols, g.data.iter().zip(&out.data).map(|(gv, o)| gv * o).collect());
                    let gb = mul_bcast(&tmp, vb, |t, y| -t / y);
                    self.acc_reduce(&mut grads, *a, &ga);
                    self.acc_reduce(&mut grads, *b, &gb);
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b));
                    let gb = self.value(*a).t_matmul(&g);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, k) => accumulate(&mut grads, *a, g.map(|x| x * k)),
                Op::AddScalar(a) => accumulate(&mut grads, *a, g.clone()),
                Op::Tanh(a) => accumulate(&mut grads, *a, zip_map(&g, &node.value, |gv, y| gv * (1.0 - y * y))),
                Op::Sigmoid(a) => accumulate(&mut grads, *a, zip_map(&g, &node.value, |gv, y| gv * y * (1.0 - y))),
                Op::Relu(a) => accumulate(&mut grads, *a, zip_map(&g, self.value(*a), |gv, x| if x > 0.0 { gv } else { 0.0 })),
                Op::Exp(a) => accumulate(&mut grads, *a, zip_map(&g, &node.value, |gv, y| gv * y)),
                Op::Ln(a) => accumulate(&mut grads, *a, zip_map(&g, self.value(*a), |gv, x| gv / x)),
                Op::Abs(a) => accumulate(&mut grads, *a, zip_map(&g, self.value(*a), |gv, x| gv * sign(x))),
                Op::Sqrt(a) => accumulate(&mut grads, *a, zip_map(&g, &node.value, |gv, y| gv * 0.5 / y)),
                Op::Square(a) => accumulate(&mut grads, *a, zip_map(&g, self.value(*a), |gv, x| gv * 2.0 * x)),
                Op::Softplus(a) => accumulate(&mut grads, *a, zip_map(&g, self.value(*a), |gv, x| gv * sigmoid(x))),
                Op::Clamp(a, lo, hi) => accumulate(
                    &mut grads,
                    *a,
                    zip_map(&g, self.value(*a), |gv, x| if x >= *lo && x <= *hi { gv } else { 0.0 }),
                ),
                Op::SumAll(a) => {
                    let (r, c) = self.shape(*a);
                    accumulate(&mut grads, *a, Tensor::filled(r, c, g.item()));
                }
                Op::SumRows(a) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Tensor::zeros(r, c);
                    for i in 0..r {
                        ga.data[i * c..(i + 1) * c].copy_from_slice(&g.data);
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SumCols(a) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Tensor::zeros(r, c);
                    for i in 0..r {
                        for j in 0..c {
                            ga.data[i * c + j] = g.data[i];
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let (r, c) = self.shape(*p);
                        let mut gp = Tensor::zeros(r, c);
                        for i in 0..r {
                            gp.data[i * c..(i + 1) * c].copy_from_slice(&g.row_slice(i)[off..off + c]);
                        }
                        off += c;
                        accumulate(&mut grads, *p, gp);
                    }
                }
                Op::SliceCols(a, start) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Tensor::zeros(r, c);
                    for i in 0..r {
                        ga.data[i * c + start..i * c + start + g.cols].copy_from_slice(g.row_slice(i));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let (r, c) = self.shape(*p);
                        let gp = Tensor::from_vec(r, c, g.data[off * c..(off + r) * c].to_vec());
                        off += r;
                        accumulate(&mut grads, *p, gp);
                    }
                }
                Op::SliceRows(a, start) => {
                    let (r, c) = self.shape(*a);
                    let mut ga = Tensor::zeros(r, c);
                    ga.data[start * c..(start + g.rows) * c].copy_from_slice(&g.data);
                    accumulate(&mut grads, *a, ga);
                }
                Op::LogSoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = Tensor::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let gs: f64 = g.row_slice(r).iter().sum();
                        for c in 0..y.cols {
                            let k = r * y.cols + c;
                            ga.data[k] = g.data[k] - y.data[k].exp() * gs;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
            }
            grads[i] = Some(g);
        }
        Gradients {
            grads,
            params: self.params.clone(),
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        }
    }

    /// Accumulate an output-shaped gradient into `target`, summing over broadcast dimensions.
    fn acc_reduce(&self, grads: &mut [Option<Tensor>], target: Var, g: &Tensor) {
        let (r, c) = self.shape(target);
        if (r, c) == g.shape() {
            accumulate(grads, target, g.clone());
            return;
        }
        let mut red = Tensor::zeros(r, c);
        for i in 0..g.rows {
            for j in 0..g.cols {
                let k = bidx(&red, i, j);
                red.data[k] += g.data[i * g.cols + j];
            }
        }
        accumulate(grads, target, red);
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(g: &Tensor, v: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::from_vec(g.rows, g.cols, g.data.iter().zip(&v.data).map(|(&a, &b)| f(a, b)).collect())
}

/// `f(g[i,j], other broadcast to g's shape)`.
fn mul_bcast(g: &Tensor, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    if g.shape() == other.shape() {
        return zip_map(g, other, f);
    }
    let mut out = Tensor::zeros(g.rows, g.cols);
    for i in 0..g.rows {
        for j in 0..g.cols {
            out.data[i * g.cols + j] = f(g.data[i * g.cols + j], other.data[bidx(other, i, j)]);
        }
    }
    out
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
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

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}
