//! Dense tensors and a reverse-mode tape.
//!
//! Every forward op appends a node holding its value and enough saved state
//! to run its adjoint. `Tape::backward` walks the nodes in reverse and
//! accumulates gradients into per-node buffers; nodes that cannot reach a
//! parameter are skipped.

use std::rc::Rc;

use crate::error::{NnError, Result};
use crate::kernels::{attention_backward, attention_forward, gemm};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(NnError::Shape(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor { shape, data: vec![0.0; len] }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(NnError::Shape("ragged rows".into()));
        }
        Tensor::matrix(rows.len(), cols, rows.concat())
    }

    pub fn scalar(x: f64) -> Self {
        Tensor { shape: vec![1], data: vec![x] }
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows of a 2-d tensor (1 for a vector).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[0],
            _ => 1,
        }
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Deliberate gradient corruption, used to prove the gradient checker bites.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradFault {
    /// Layer-norm input gradients are multiplied by this factor.
    pub layer_norm_factor: f64,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Rc<Vec<f64>>),
    AddConst(Var),
    Gelu(Var),
    Relu(Var),
    LayerNorm { x: Var, rstd: Vec<f64> },
    Attention { q: Var, k: Var, v: Var, bias: Var, heads: usize, probs: Vec<f64> },
    GatherRows { x: Var, idx: Rc<Vec<usize>> },
    ConcatRows(Var, Var),
    CrossEntropy { logits: Var, targets: Rc<Vec<usize>>, probs: Vec<f64> },
    L1 { pred: Var, target: Rc<Vec<f64>> },
    Dot { x: Var, weights: Rc<Vec<f64>> },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Scale(..) => "scale",
            Op::MulConst(..) => "mul_const",
            Op::AddConst(..) => "add_const",
            Op::Gelu(..) => "gelu",
            Op::Relu(..) => "relu",
            Op::LayerNorm { .. } => "layer_norm",
            Op::Attention { .. } => "attention",
            Op::GatherRows { .. } => "gather_rows",
            Op::ConcatRows(..) => "concat_rows",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::L1 { .. } => "l1",
            Op::Dot { .. } => "dot",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// Tanh form of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    fault: Option<GradFault>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn with_fault(fault: GradFault) -> Self {
        Tape { nodes: Vec::new(), fault: Some(fault) }
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

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(NnError::NonFinite(op.name()));
        }
        let needs_grad = inputs.iter().any(|&v| self.needs(v));
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A leaf whose gradient is wanted.
    pub fn param(&mut self, t: Tensor) -> Result<Var> {
        let v = self.push(t, Op::Leaf, &[])?;
        self.nodes[v.0].needs_grad = true;
        Ok(v)
    }

    /// A leaf treated as data.
    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Leaf, &[])
    }

    fn dims2(&self, v: Var, what: &str) -> Result<(usize, usize)> {
        let s = self.value(v).shape();
        if s.len() != 2 {
            return Err(NnError::Shape(format!("{what}: expected a matrix, got shape {s:?}")));
        }
        Ok((s[0], s[1]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul lhs")?;
        let (k2, n) = self.dims2(b, "matmul rhs")?;
        if k != k2 {
            return Err(NnError::Shape(format!("matmul {m}x{k} by {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            1.0,
            (self.value(a).data(), k, 1),
            (self.value(b).data(), n, 1),
            0.0,
            (&mut out, n, 1),
        );
        self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(NnError::Shape(format!("add {:?} and {:?}", x.shape(), y.shape())));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let shape = x.shape().to_vec();
        self.push(Tensor::new(shape, data)?, Op::Add(a, b), &[a, b])
    }

    /// `x + 1 b` for a matrix `x` and a row vector `b`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (m, n) = self.dims2(x, "add_row")?;
        let bv = self.value(b);
        if bv.len() != n {
            return Err(NnError::Shape(format!("row of {} added to {m}x{n}", bv.len())));
        }
        let bd = bv.data().to_vec();
        let data = self
            .value(x)
            .data()
            .chunks(n)
            .flat_map(|row| row.iter().zip(&bd).map(|(p, q)| p + q).collect::<Vec<_>>())
            .collect();
        self.push(Tensor::matrix(m, n, data)?, Op::AddRow(x, b), &[x, b])
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        let t = self.value(x);
        let data = t.data().iter().map(|v| v * s).collect();
        let shape = t.shape().to_vec();
        self.push(Tensor::new(shape, data)?, Op::Scale(x, s), &[x])
    }

    /// Elementwise product with a constant of the same size (dropout masks).
    pub fn mul_const(&mut self, x: Var, c: Rc<Vec<f64>>) -> Result<Var> {
        let t = self.value(x);
        if c.len() != t.len() {
            return Err(NnError::Shape("mul_const size mismatch".into()));
        }
        let data = t.data().iter().zip(c.iter()).map(|(p, q)| p * q).collect();
        let shape = t.shape().to_vec();
        self.push(Tensor::new(shape, data)?, Op::MulConst(x, c), &[x])
    }

    /// `x + c` for a constant `c` of the same size.
    pub fn add_const(&mut self, x: Var, c: &[f64]) -> Result<Var> {
        let t = self.value(x);
        if c.len() != t.len() {
            return Err(NnError::Shape("add_const size mismatch".into()));
        }
        let data = t.data().iter().zip(c).map(|(p, q)| p + q).collect();
        let shape = t.shape().to_vec();
        self.push(Tensor::new(shape, data)?, Op::AddConst(x), &[x])
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| gelu(v)).collect();
        let shape = t.shape().to_vec();
        self.push(Tensor::new(shape, data)?, Op::Gelu(x), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| v.max(0.0)).collect();
        let shape = t.shape().to_vec();
        self.push(Tensor::new(shape, data)?, Op::Relu(x), &[x])
    }

    /// Row-wise normalization to zero mean and unit variance, no affine part.
    pub fn layer_norm(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.dims2(x, "layer_norm")?;
        let mut out = Vec::with_capacity(m * n);
        let mut rstd = Vec::with_capacity(m);
        for row in self.value(x).data().chunks(n) {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            out.extend(row.iter().map(|v| (v - mean) * r));
            rstd.push(r);
        }
        self.push(Tensor::matrix(m, n, out)?, Op::LayerNorm { x, rstd }, &[x])
    }

    /// Multi-head `softmax(QK^T / sqrt(d_h) + B + mask) V`. `q`, `k`, `v` are
    /// `L x d` with head `i` in columns `i*d_h..(i+1)*d_h`; `bias` is
    /// `L^2 x h` (pair-major). `mask` is an optional additive constant per
    /// pair shared by all heads; it may hold `-inf`.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        bias: Var,
        heads: usize,
        mask: Option<&[f64]>,
    ) -> Result<Var> {
        let (l, d) = self.dims2(q, "attention q")?;
        if self.dims2(k, "attention k")? != (l, d) || self.dims2(v, "attention v")? != (l, d) {
            return Err(NnError::Shape("q, k and v must share a shape".into()));
        }
        if heads == 0 || d % heads != 0 {
            return Err(NnError::Shape(format!("{heads} heads do not divide width {d}")));
        }
        if self.value(bias).len() != l * l * heads {
            return Err(NnError::Shape(format!(
                "bias has {} entries, expected {l}^2 x {heads}",
                self.value(bias).len()
            )));
        }
        if mask.is_some_and(|m| m.len() != l * l) {
            return Err(NnError::Shape("mask must have one entry per pair".into()));
        }
        let (out, probs) = attention_forward(
            self.value(q).data(),
            self.value(k).data(),
            self.value(v).data(),
            self.value(bias).data(),
            mask,
            l,
            d,
            heads,
        )?;
        self.push(
            Tensor::matrix(l, d, out)?,
            Op::Attention { q, k, v, bias, heads, probs },
            &[q, k, v, bias],
        )
    }

    /// Attention probabilities `h x L x L` saved by an attention node.
    pub fn attention_probs(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    pub fn gather_rows(&mut self, x: Var, idx: Rc<Vec<usize>>) -> Result<Var> {
        let (m, n) = self.dims2(x, "gather_rows")?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= m) {
            return Err(NnError::Shape(format!("row {bad} of {m}")));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(idx.len() * n);
        for &i in idx.iter() {
            out.extend_from_slice(&src[i * n..(i + 1) * n]);
        }
        let rows = idx.len();
        self.push(Tensor::matrix(rows, n, out)?, Op::GatherRows { x, idx }, &[x])
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ma, na) = self.dims2(a, "concat lhs")?;
        let (mb, nb) = self.dims2(b, "concat rhs")?;
        if na != nb {
            return Err(NnError::Shape(format!("concat {ma}x{na} over {mb}x{nb}")));
        }
        let mut out = self.value(a).data().to_vec();
        out.extend_from_slice(self.value(b).data());
        self.push(Tensor::matrix(ma + mb, na, out)?, Op::ConcatRows(a, b), &[a, b])
    }

    /// Mean cross-entropy of `N x C` logits against class indices.
    pub fn cross_entropy(&mut self, logits: Var, targets: Rc<Vec<usize>>) -> Result<Var> {
        let (m, c) = self.dims2(logits, "cross_entropy")?;
        if targets.len() != m || m == 0 {
            return Err(NnError::Shape(format!("{} targets for {m} rows", targets.len())));
        }
        if targets.iter().any(|&t| t >= c) {
            return Err(NnError::Shape(format!("target class outside 0..{c}")));
        }
        let mut probs = Vec::with_capacity(m * c);
        let mut loss = 0.0;
        for (row, &t) in self.value(logits).data().chunks(c).zip(targets.iter()) {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
            loss += z.ln() + mx - row[t];
            probs.extend(row.iter().map(|v| (v - mx).exp() / z));
        }
        self.push(
            Tensor::scalar(loss / m as f64),
            Op::CrossEntropy { logits, targets, probs },
            &[logits],
        )
    }

    /// Mean absolute error.
    pub fn l1(&mut self, pred: Var, target: Rc<Vec<f64>>) -> Result<Var> {
        let p = self.value(pred);
        if p.len() != target.len() || target.is_empty() {
            return Err(NnError::Shape(format!("{} targets for {} predictions", target.len(), p.len())));
        }
        let loss = p.data().iter().zip(target.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>()
            / target.len() as f64;
        self.push(Tensor::scalar(loss), Op::L1 { pred, target }, &[pred])
    }

    /// `sum_i x_i w_i`.
    pub fn dot(&mut self, x: Var, weights: Rc<Vec<f64>>) -> Result<Var> {
        let t = self.value(x);
        if t.len() != weights.len() {
            return Err(NnError::Shape("dot size mismatch".into()));
        }
        let s = t.data().iter().zip(weights.iter()).map(|(a, b)| a * b).sum();
        self.push(Tensor::scalar(s), Op::Dot { x, weights }, &[x])
    }

    /// Gradients of a scalar `loss` with respect to every node that needs one.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(NnError::Shape("backward needs a scalar loss".into()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if self.nodes[i].needs_grad {
                self.adjoint(i, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn acc<'a>(&self, grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
        if !self.needs(v) {
            return None;
        }
        let len = self.value(v).len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]))
    }

    fn adjoint(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, k) = (self.value(a).shape()[0], self.value(a).shape()[1]);
                let n = self.value(b).shape()[1];
                if let Some(ga) = self.acc(grads, a) {
                    // dA += dC B^T
                    gemm(m, n, k, 1.0, (g, n, 1), (self.value(b).data(), 1, n), 1.0, (ga, k, 1));
                }
                if let Some(gb) = self.acc(grads, b) {
                    // dB += A^T dC
                    gemm(k, m, n, 1.0, (self.value(a).data(), 1, k), (g, n, 1), 1.0, (gb, n, 1));
                }
            }
            &Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(gv) = self.acc(grads, v) {
                        gv.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                    }
                }
            }
            &Op::AddRow(x, b) => {
                if let Some(gx) = self.acc(grads, x) {
                    gx.iter_mut().zip(g).for_each(|(p, q)| *p += q);
                }
                let n = self.value(b).len();
                if let Some(gb) = self.acc(grads, b) {
                    for row in g.chunks(n) {
                        gb.iter_mut().zip(row).for_each(|(p, q)| *p += q);
                    }
                }
            }
            &Op::Scale(x, s) => {
                if let Some(gx) = self.acc(grads, x) {
                    gx.iter_mut().zip(g).for_each(|(p, q)| *p += s * q);
                }
            }
            Op::MulConst(x, c) => {
                if let Some(gx) = self.acc(grads, *x) {
                    for ((p, q), w) in gx.iter_mut().zip(g).zip(c.iter()) {
                        *p += q * w;
                    }
                }
            }
            &Op::AddConst(x) => {
                if let Some(gx) = self.acc(grads, x) {
                    gx.iter_mut().zip(g).for_each(|(p, q)| *p += q);
                }
            }
            &Op::Gelu(x) => {
                let xs = self.value(x).data().to_vec();
                if let Some(gx) = self.acc(grads, x) {
                    for ((p, q), v) in gx.iter_mut().zip(g).zip(xs) {
                        *p += q * gelu_grad(v);
                    }
                }
            }
            &Op::Relu(x) => {
                let xs = self.value(x).data().to_vec();
                if let Some(gx) = self.acc(grads, x) {
                    for ((p, q), v) in gx.iter_mut().zip(g).zip(xs) {
                        if v > 0.0 {
                            *p += q;
                        }
                    }
                }
            }
            Op::LayerNorm { x, rstd } => {
                let y = node.value.data();
                let n = node.value.cols();
                let factor = self.fault.map_or(1.0, |f| f.layer_norm_factor);
                if let Some(gx) = self.acc(grads, *x) {
                    for (r, &rs) in rstd.iter().enumerate() {
                        let dy = &g[r * n..(r + 1) * n];
                        let yr = &y[r * n..(r + 1) * n];
                        let mean_dy = dy.iter().sum::<f64>() / n as f64;
                        let mean_dyy = dy.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                        for j in 0..n {
                            gx[r * n + j] += factor * rs * (dy[j] - mean_dy - yr[j] * mean_dyy);
                        }
                    }
                }
            }
            Op::Attention { q, k, v, bias, heads, probs } => {
                let (l, d) = (self.value(*q).shape()[0], self.value(*q).shape()[1]);
                let mut dq = vec![0.0; l * d];
                let mut dk = vec![0.0; l * d];
                let mut dv = vec![0.0; l * d];
                let mut db = vec![0.0; l * l * heads];
                attention_backward(
                    g,
                    self.value(*q).data(),
                    self.value(*k).data(),
                    self.value(*v).data(),
                    probs,
                    l,
                    d,
                    *heads,
                    (&mut dq, &mut dk, &mut dv, &mut db),
                );
                for (var, local) in [(*q, dq), (*k, dk), (*v, dv), (*bias, db)] {
                    if let Some(gv) = self.acc(grads, var) {
                        gv.iter_mut().zip(local).for_each(|(p, q)| *p += q);
                    }
                }
            }
            Op::GatherRows { x, idx } => {
                let n = node.value.cols();
                if let Some(gx) = self.acc(grads, *x) {
                    for (r, &src) in idx.iter().enumerate() {
                        for j in 0..n {
                            gx[src * n + j] += g[r * n + j];
                        }
                    }
                }
            }
            &Op::ConcatRows(a, b) => {
                let split = self.value(a).len();
                if let Some(ga) = self.acc(grads, a) {
                    ga.iter_mut().zip(&g[..split]).for_each(|(p, q)| *p += q);
                }
                if let Some(gb) = self.acc(grads, b) {
                    gb.iter_mut().zip(&g[split..]).for_each(|(p, q)| *p += q);
                }
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let c = self.value(*logits).cols();
                let m = targets.len() as f64;
                if let Some(gl) = self.acc(grads, *logits) {
                    for (r, &t) in targets.iter().enumerate() {
                        for j in 0..c {
                            let onehot = if j == t { 1.0 } else { 0.0 };
                            gl[r * c + j] += g[0] * (probs[r * c + j] - onehot) / m;
                        }
                    }
                }
            }
            Op::L1 { pred, target } => {
                let p = self.value(*pred).data().to_vec();
                let m = target.len() as f64;
                if let Some(gp) = self.acc(grads, *pred) {
                    for ((gv, a), b) in gp.iter_mut().zip(p).zip(target.iter()) {
                        let s = if a > *b {
                            1.0
                        } else if a < *b {
                            -1.0
                        } else {
                            0.0
                        };
                        *gv += g[0] * s / m;
                    }
                }
            }
            Op::Dot { x, weights } => {
                if let Some(gx) = self.acc(grads, *x) {
                    gx.iter_mut().zip(weights.iter()).for_each(|(p, w)| *p += g[0] * w);
                }
            }
        }
    }
}

pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; `None` if `v` does not
    /// influence it.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(build: impl Fn(&mut Tape, Var) -> Var, x0: Tensor) {
        let mut tape = Tape::new();
        let x = tape.param(x0.clone()).unwrap();
        let y = build(&mut tape, x);
        let grads = tape.backward(y).unwrap();
        let analytic = grads.get(x).unwrap().to_vec();
        let eps = 1e-6;
        for i in 0..x0.len() {
            let eval = |delta: f64| {
                let mut t = x0.clone();
                t.data_mut()[i] += delta;
                let mut tape = Tape::new();
                let x = tape.param(t).unwrap();
                let y = build(&mut tape, x);
                tape.value(y).data()[0]
            };
            let fd = (eval(eps) - eval(-eps)) / (2.0 * eps);
            assert!((fd - analytic[i]).abs() <= 1e-6 * fd.abs().max(1.0), "entry {i}: {fd} vs {}", analytic[i]);
        }
    }

    fn weights(n: usize) -> Rc<Vec<f64>> {
        Rc::new((0..n).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect())
    }

    fn sample(rows: usize, cols: usize) -> Tensor {
        let data = (0..rows * cols).map(|i| ((i * 13 % 17) as f64 - 8.0) / 5.0).collect();
        Tensor::matrix(rows, cols, data).unwrap()
    }

    #[test]
    fn matmul_values() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
        let b = t.constant(Tensor::matrix(2, 1, vec![5.0, 6.0]).unwrap()).unwrap();
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.value(c).data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_gradients() {
        let other = sample(3, 2);
        fd_check(
            |t, x| {
                let o = t.constant(other.clone()).unwrap();
                let y = t.matmul(x, o).unwrap();
                t.dot(y, weights(8)).unwrap()
            },
            sample(4, 3),
        );
        fd_check(
            |t, x| {
                let o = t.constant(sample(2, 4)).unwrap();
                let y = t.matmul(o, x).unwrap();
                t.dot(y, weights(6)).unwrap()
            },
            sample(4, 3),
        );
    }

    #[test]
    fn pointwise_and_norm_gradients() {
        fd_check(|t, x| { let y = t.gelu(x).unwrap(); t.dot(y, weights(12)).unwrap() }, sample(3, 4));
        fd_check(|t, x| { let y = t.layer_norm(x).unwrap(); t.dot(y, weights(12)).unwrap() }, sample(3, 4));
        fd_check(
            |t, x| {
                let b = t.constant(Tensor::new(vec![4], vec![0.5, -1.0, 2.0, 0.0]).unwrap()).unwrap();
                let y = t.add_row(x, b).unwrap();
                let y = t.scale(y, -1.5).unwrap();
                let z = t.add(y, x).unwrap();
                t.dot(z, weights(12)).unwrap()
            },
            sample(3, 4),
        );
    }

    #[test]
    fn gather_concat_gradients() {
        fd_check(
            |t, x| {
                let g = t.gather_rows(x, Rc::new(vec![2, 0, 2, 1])).unwrap();
                let c = t.concat_rows(g, x).unwrap();
                t.dot(c, weights(21)).unwrap()
            },
            sample(3, 3),
        );
    }

    #[test]
    fn loss_gradients() {
        fd_check(|t, x| t.cross_entropy(x, Rc::new(vec![0, 2, 1])).unwrap(), sample(3, 3));
        fd_check(|t, x| t.l1(x, Rc::new(vec![10.0, -10.0, 0.3, 0.1, 0.0, 4.0])).unwrap(), sample(2, 3));
    }

    #[test]
    fn attention_gradients() {
        let (l, d, h) = (4, 4, 2);
        let bias = sample(l * l, h);
        for which in 0..4 {
            fd_check(
                |t, x| {
                    let mut ins = [sample(l, d), sample(l, d), sample(l, d), bias.clone()]
                        .map(|m| t.constant(m).unwrap());
                    ins[which] = x;
                    let y = t.attention(ins[0], ins[1], ins[2], ins[3], h, None).unwrap();
                    t.dot(y, weights(l * d)).unwrap()
                },
                if which == 3 { bias.clone() } else { sample(l, d) },
            );
        }
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::scalar(1e308)).unwrap();
        assert!(matches!(t.scale(a, 10.0), Err(NnError::NonFinite("scale"))));
        assert!(t.constant(Tensor::scalar(f64::NAN)).is_err());
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut t = Tape::new();
        let a = t.constant(sample(2, 2)).unwrap();
        let b = t.param(sample(2, 2)).unwrap();
        let c = t.matmul(a, b).unwrap();
        let y = t.dot(c, weights(4)).unwrap();
        let g = t.backward(y).unwrap();
        assert!(g.get(a).is_none());
        assert!(g.get(b).is_some());
    }

    #[test]
    fn fault_scales_layer_norm_gradient() {
        let build = |t: &mut Tape| {
            let x = t.param(sample(2, 3)).unwrap();
            let y = t.layer_norm(x).unwrap();
            let s = t.dot(y, weights(6)).unwrap();
            (x, s)
        };
        let mut clean = Tape::new();
        let (x, s) = build(&mut clean);
        let g0 = clean.backward(s).unwrap().get(x).unwrap().to_vec();
        let mut bad = Tape::with_fault(GradFault { layer_norm_factor: 2.0 });
        let (x, s) = build(&mut bad);
        let g1 = bad.backward(s).unwrap().get(x).unwrap().to_vec();
        for (a, b) in g0.iter().zip(&g1) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }
}
