//! Reverse-mode differentiation over an explicit tape.
//!
//! Every op appends a node holding its forward value and the indices of its
//! parents. `backward` walks the tape once in reverse; node indices are
//! already a topological order because parents are always recorded first.

use super::tensor::{matmul_nt_raw, matmul_raw, matmul_tn_raw, Tensor};
use crate::error::{Error, Result};

/// sqrt(2/pi), tanh-GELU constant.
pub const GELU_SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
/// Cubic coefficient of the tanh-GELU approximation.
pub const GELU_CUBIC: f64 = 0.044_715;

/// Handle to a node on a [`Graph`].
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
    /// `a · bᵀ`
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Gelu(Var),
    Silu(Var),
    Transpose(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    SelectRows(Var, Vec<usize>),
    MeanRows(Var),
    SumAll(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// A single-threaded tape. One graph per forward/backward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros if the backward pass never reached it.
    pub fn get(&self, v: Var) -> Tensor {
        let shape = self.shapes[v.0].clone();
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(&shape),
        }
    }

    pub fn touched(&self, v: Var) -> bool {
        self.grads[v.0].is_some()
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (r, k) = ta.dims2();
        let (k2, c) = tb.dims2();
        if k != k2 {
            return Err(shape_err("matmul", ta, tb));
        }
        let out = Tensor::matrix(r, c, matmul_raw(ta.data(), tb.data(), r, k, c))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`, with `a: r×k` and `b: c×k`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (r, k) = ta.dims2();
        let (c, k2) = tb.dims2();
        if k != k2 {
            return Err(shape_err("matmul_nt", ta, tb));
        }
        let out = Tensor::matrix(r, c, matmul_nt_raw(ta.data(), tb.data(), r, k, c))?;
        Ok(self.push(out, Op::MatMulNt(a, b)))
    }

    fn zip_same(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        mk: Op,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.dims2() != tb.dims2() {
            return Err(shape_err(op, ta, tb));
        }
        let (r, c) = ta.dims2();
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let out = Tensor::matrix(r, c, data)?;
        Ok(self.push(out, mk))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn row_broadcast(
        &mut self,
        op: &'static str,
        m: Var,
        row: Var,
        f: impl Fn(f64, f64) -> f64,
        mk: Op,
    ) -> Result<Var> {
        let (tm, tr) = (self.value(m), self.value(row));
        let (r, c) = tm.dims2();
        if tr.dims2() != (1, c) {
            return Err(shape_err(op, tm, tr));
        }
        let rv = tr.data();
        let data = tm
            .data()
            .chunks(c)
            .flat_map(|chunk| chunk.iter().zip(rv).map(|(&x, &y)| f(x, y)))
            .collect();
        let out = Tensor::matrix(r, c, data)?;
        Ok(self.push(out, mk))
    }

    /// Matrix plus a row vector broadcast over rows.
    pub fn add_row(&mut self, m: Var, row: Var) -> Result<Var> {
        self.row_broadcast("add_row", m, row, |x, y| x + y, Op::AddRow(m, row))
    }

    /// Matrix times a row vector broadcast over rows (elementwise).
    pub fn mul_row(&mut self, m: Var, row: Var) -> Result<Var> {
        self.row_broadcast("mul_row", m, row, |x, y| x * y, Op::MulRow(m, row))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|v| v * c);
        self.push(out, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|v| v + c);
        self.push(out, Op::AddScalar(a))
    }

    /// Row-wise softmax; the row max is subtracted first.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (r, c) = t.dims2();
        let mut out = Vec::with_capacity(r * c);
        for row in t.data().chunks(c) {
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let start = out.len();
            let mut sum = 0.0;
            for &v in row {
                let e = (v - mx).exp();
                sum += e;
                out.push(e);
            }
            for e in &mut out[start..] {
                *e /= sum;
            }
        }
        let out = Tensor::matrix(r, c, out).expect("softmax shape");
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Layer normalization over the last axis with biased variance.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let (r, d) = tx.dims2();
        if tg.dims2() != (1, d) {
            return Err(shape_err("layer_norm", tx, tg));
        }
        if tb.dims2() != (1, d) {
            return Err(shape_err("layer_norm", tx, tb));
        }
        let mut xhat = Vec::with_capacity(r * d);
        let mut inv_std = Vec::with_capacity(r);
        let mut out = Vec::with_capacity(r * d);
        for row in tx.data().chunks(d) {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std.push(inv);
            for (j, &v) in row.iter().enumerate() {
                let h = (v - mean) * inv;
                xhat.push(h);
                out.push(h * tg.data()[j] + tb.data()[j]);
            }
        }
        let out = Tensor::matrix(r, d, out)?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        ))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| {
            let u = GELU_SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
            0.5 * x * (1.0 + u.tanh())
        });
        self.push(out, Op::Gelu(a))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * sigmoid(x));
        self.push(out, Op::Silu(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let c = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut r = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != c {
                return Err(shape_err("concat_rows", self.value(parts[0]), t));
            }
            r += t.rows();
            data.extend_from_slice(t.data());
        }
        let out = Tensor::matrix(r, c, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let r = self.value(parts[0]).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.value(p);
            if t.rows() != r {
                return Err(shape_err("concat_cols", self.value(parts[0]), t));
            }
            widths.push(t.cols());
        }
        let c: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        let out = Tensor::matrix(r, c, data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = t.dims2();
        if len == 0 || start + len > c {
            return Err(Error::Shape {
                op: "slice_cols",
                left: t.shape().to_vec(),
                right: vec![start, len],
            });
        }
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&t.row_slice(i)[start..start + len]);
        }
        let out = Tensor::matrix(r, len, data)?;
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    /// Gather rows by index (duplicates allowed).
    pub fn select_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = t.dims2();
        if idx.is_empty() || idx.iter().any(|&i| i >= r) {
            return Err(Error::Shape {
                op: "select_rows",
                left: t.shape().to_vec(),
                right: idx.to_vec(),
            });
        }
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(t.row_slice(i));
        }
        let out = Tensor::matrix(idx.len(), c, data)?;
        Ok(self.push(out, Op::SelectRows(a, idx.to_vec())))
    }

    /// Column means, `r×c → 1×c`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (r, c) = t.dims2();
        let mut out = vec![0.0; c];
        for row in t.data().chunks(c) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= r as f64;
        }
        let out = Tensor::matrix(1, c, out).expect("mean_rows shape");
        self.push(out, Op::MeanRows(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    /// Gradients of the scalar node `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::Shape {
                op: "backward",
                left: lt.shape().to_vec(),
                right: vec![1],
            });
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let acc = |grads: &mut [Option<Vec<f64>>], v: Var, delta: &[f64]| {
            let slot = &mut grads[v.0];
            match slot {
                Some(buf) => {
                    for (b, d) in buf.iter_mut().zip(delta) {
                        *b += d;
                    }
                }
                None => *slot = Some(delta.to_vec()),
            }
        };
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (r, k) = ta.dims2();
                let c = tb.cols();
                acc(grads, *a, &matmul_nt_raw(g, tb.data(), r, c, k));
                acc(grads, *b, &matmul_tn_raw(ta.data(), g, r, k, c));
            }
            Op::MatMulNt(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (r, k) = ta.dims2();
                let c = tb.rows();
                acc(grads, *a, &matmul_raw(g, tb.data(), r, c, k));
                acc(grads, *b, &matmul_tn_raw(g, ta.data(), r, c, k));
            }
            Op::Add(a, b) => {
                acc(grads, *a, g);
                acc(grads, *b, g);
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g);
                let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                acc(grads, *b, &neg);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let da: Vec<f64> = g.iter().zip(tb.data()).map(|(x, y)| x * y).collect();
                let db: Vec<f64> = g.iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                acc(grads, *a, &da);
                acc(grads, *b, &db);
            }
            Op::AddRow(m, row) => {
                let c = out.cols();
                acc(grads, *m, g);
                acc(grads, *row, &col_sums(g, c));
            }
            Op::MulRow(m, row) => {
                let (tm, tr) = (self.value(*m), self.value(*row));
                let c = out.cols();
                let rv = tr.data();
                let dm: Vec<f64> = g
                    .chunks(c)
                    .flat_map(|ch| ch.iter().zip(rv).map(|(x, y)| x * y))
                    .collect();
                let prod: Vec<f64> = g.iter().zip(tm.data()).map(|(x, y)| x * y).collect();
                acc(grads, *m, &dm);
                acc(grads, *row, &col_sums(&prod, c));
            }
            Op::Scale(a, c) => {
                let d: Vec<f64> = g.iter().map(|v| v * c).collect();
                acc(grads, *a, &d);
            }
            Op::AddScalar(a) => acc(grads, *a, g),
            Op::SoftmaxRows(a) => {
                let c = out.cols();
                let mut d = Vec::with_capacity(g.len());
                for (grow, yrow) in g.chunks(c).zip(out.data().chunks(c)) {
                    let dot: f64 = grow.iter().zip(yrow).map(|(x, y)| x * y).sum();
                    d.extend(grow.iter().zip(yrow).map(|(gv, y)| y * (gv - dot)));
                }
                acc(grads, *a, &d);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let d = out.cols();
                let gv = self.value(*gain).data();
                let mut dx = Vec::with_capacity(g.len());
                let mut dgain = vec![0.0; d];
                let mut dbias = vec![0.0; d];
                for (i, grow) in g.chunks(d).enumerate() {
                    let hrow = &xhat[i * d..(i + 1) * d];
                    let mut sum_dh = 0.0;
                    let mut sum_dh_h = 0.0;
                    let dh: Vec<f64> = grow.iter().zip(gv).map(|(a, b)| a * b).collect();
                    for j in 0..d {
                        dgain[j] += grow[j] * hrow[j];
                        dbias[j] += grow[j];
                        sum_dh += dh[j];
                        sum_dh_h += dh[j] * hrow[j];
                    }
                    let inv = inv_std[i];
                    let n = d as f64;
                    for j in 0..d {
                        dx.push(inv / n * (n * dh[j] - sum_dh - hrow[j] * sum_dh_h));
                    }
                }
                acc(grads, *x, &dx);
                acc(grads, *gain, &dgain);
                acc(grads, *bias, &dbias);
            }
            Op::Gelu(a) => {
                let d: Vec<f64> = g
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(gv, &x)| {
                        let u = GELU_SQRT_2_OVER_PI * (x + GELU_CUBIC * x * x * x);
                        let th = u.tanh();
                        let du = GELU_SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * x * x);
                        gv * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du)
                    })
                    .collect();
                acc(grads, *a, &d);
            }
            Op::Silu(a) => {
                let d: Vec<f64> = g
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(gv, &x)| {
                        let s = sigmoid(x);
                        gv * s * (1.0 + x * (1.0 - s))
                    })
                    .collect();
                acc(grads, *a, &d);
            }
            Op::Transpose(a) => {
                let (r, c) = out.dims2();
                let gt = Tensor::matrix(r, c, g.to_vec()).expect("grad shape").transpose();
                acc(grads, *a, gt.data());
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = self.value(*p).len();
                    acc(grads, *p, &g[off..off + n]);
                    off += n;
                }
            }
            Op::ConcatCols(parts) => {
                let (r, c) = out.dims2();
                let mut start = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    let mut d = Vec::with_capacity(r * w);
                    for i in 0..r {
                        d.extend_from_slice(&g[i * c + start..i * c + start + w]);
                    }
                    acc(grads, *p, &d);
                    start += w;
                }
            }
            Op::SliceCols(a, start) => {
                let src = self.value(*a);
                let (r, c) = src.dims2();
                let w = out.cols();
                let mut d = vec![0.0; r * c];
                for i in 0..r {
                    d[i * c + start..i * c + start + w].copy_from_slice(&g[i * w..(i + 1) * w]);
                }
                acc(grads, *a, &d);
            }
            Op::SelectRows(a, idx) => {
                let src = self.value(*a);
                let (r, c) = src.dims2();
                let mut d = vec![0.0; r * c];
                for (k, &i) in idx.iter().enumerate() {
                    for j in 0..c {
                        d[i * c + j] += g[k * c + j];
                    }
                }
                acc(grads, *a, &d);
            }
            Op::MeanRows(a) => {
                let (r, _) = self.value(*a).dims2();
                let scale = 1.0 / r as f64;
                let row: Vec<f64> = g.iter().map(|v| v * scale).collect();
                let d: Vec<f64> = (0..r).flat_map(|_| row.iter().copied()).collect();
                acc(grads, *a, &d);
            }
            Op::SumAll(a) => {
                let n = self.value(*a).len();
                acc(grads, *a, &vec![g[0]; n]);
            }
        }
    }
}

fn col_sums(g: &[f64], c: usize) -> Vec<f64> {
    let mut s = vec![0.0; c];
    for ch in g.chunks(c) {
        for (a, b) in s.iter_mut().zip(ch) {
            *a += b;
        }
    }
    s
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
