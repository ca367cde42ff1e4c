//! Eager reverse-mode tape.
//!
//! Every op evaluates immediately and appends a node holding its value and
//! the inputs it needs for the vector-Jacobian product. Node indices are
//! creation order, so walking them backwards is a reverse topological order.

use super::fft::{fft_rows, ifft_rows_real};
use super::kernels::{self as k, map_par, zip_par};
use super::{NumericError, Precision, Result, Tensor};
use crate::scan;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnaryKind {
    Neg,
    Exp,
    Log,
    Sigmoid,
    Tanh,
    Softplus,
    Clamp { lo: f64, hi: f64 },
    /// `x + 0.5` for `x >= 0`, `sigmoid(x)` otherwise.
    G,
    LogG,
    /// `ln(1 - e^x)`.
    Log1mExp,
    Gelu,
    Sqrt,
    Square,
    Scale(f64),
    AddScalar(f64),
}

impl UnaryKind {
    fn forward(self, x: f64) -> f64 {
        use UnaryKind::*;
        match self {
            Neg => -x,
            Exp => x.exp(),
            Log => x.ln(),
            Sigmoid => k::sigmoid(x),
            Tanh => x.tanh(),
            Softplus => k::softplus(x),
            Clamp { lo, hi } => x.clamp(lo, hi),
            G => k::g_nonlin(x),
            LogG => k::log_g(x),
            Log1mExp => k::log1mexp(x),
            Gelu => k::gelu(x),
            Sqrt => x.sqrt(),
            Square => x * x,
            Scale(c) => c * x,
            AddScalar(c) => x + c,
        }
    }

    /// dy/dx given input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        use UnaryKind::*;
        match self {
            Neg => -1.0,
            Exp => y,
            Log => 1.0 / x,
            Sigmoid => y * (1.0 - y),
            Tanh => 1.0 - y * y,
            Softplus => k::sigmoid(x),
            Clamp { lo, hi } => {
                if (lo..=hi).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            G => k::g_nonlin_grad(x),
            LogG => k::log_g_grad(x),
            Log1mExp => k::log1mexp_grad(x),
            Gelu => k::gelu_grad(x),
            Sqrt => {
                if y > 0.0 {
                    0.5 / y
                } else {
                    0.0
                }
            }
            Square => 2.0 * x,
            Scale(c) => c,
            AddScalar(_) => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Unary(UnaryKind, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    MatMul(Var, Var),
    Linear { x: Var, w: Var, b: Option<Var> },
    Bmm(Var, Var),
    Softmax { x: Var, axis: usize },
    LogSoftmax { x: Var, axis: usize },
    LogSumExp(Var),
    Sum(Var),
    SumAll(Var),
    Cumsum { x: Var, axis: usize },
    CumLogSumExp { x: Var, axis: usize },
    Reshape(Var),
    Permute { x: Var, perm: Vec<usize> },
    Concat { xs: Vec<Var>, axis: usize },
    Narrow { x: Var, axis: usize, start: usize },
    PadLast(Var),
    RollLast { x: Var, shift: isize },
    Gather { table: Var, ids: Vec<usize> },
    FftReal(Var),
    IfftReal(Var),
    CExp(Var),
    ApproxLog { x: Var, eps: f64 },
    Shift3 { a: Var, s: Var },
    Sharpen { a: Var, gamma: Var },
    CrossEntropy { logits: Var, targets: Vec<usize>, mask: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Accumulated gradients, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` when nothing flowed in.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

pub struct Graph {
    nodes: Vec<Node>,
    grad_enabled: bool,
    precision: Precision,
    strict: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Graph::new()
    }
}

impl Graph {
    /// Graph recording gradients for parameters.
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grad_enabled: true,
            precision: Precision::F64,
            strict: false,
        }
    }

    /// Graph that evaluates only; [`Graph::backward`] yields no gradients.
    pub fn no_grad() -> Self {
        Graph {
            grad_enabled: false,
            ..Graph::new()
        }
    }

    pub fn with_precision(mut self, precision: Precision) -> Self {
        self.precision = precision;
        self
    }

    /// In strict mode `log` of a non-positive value is an error rather than
    /// `-inf`/NaN.
    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push_leaf(t, false)
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        let rg = self.grad_enabled;
        self.push_leaf(t, rg)
    }

    fn push_leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        let t = match self.precision {
            Precision::F64 => t,
            Precision::F32 => t.round_to_f32(),
        };
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = self.grad_enabled && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let value = match self.precision {
            Precision::F64 => value,
            Precision::F32 => value.round_to_f32(),
        };
        self.nodes.push(Node {
            value,
            op: if requires_grad { op } else { Op::Leaf },
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    // -- elementwise -------------------------------------------------------

    pub fn unary(&mut self, kind: UnaryKind, x: Var) -> Var {
        let out = Tensor::from_parts(
            self.shape(x).to_vec(),
            map_par(self.value(x).data(), move |v| kind.forward(v)),
        );
        self.push(out, Op::Unary(kind, x), &[x])
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Neg, x)
    }
    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Exp, x)
    }
    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Sigmoid, x)
    }
    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Tanh, x)
    }
    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Softplus, x)
    }
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(UnaryKind::Clamp { lo, hi }, x)
    }
    pub fn g_nonlin(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::G, x)
    }
    pub fn log_g(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::LogG, x)
    }
    pub fn log1mexp(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Log1mExp, x)
    }
    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Gelu, x)
    }
    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Sqrt, x)
    }
    pub fn square(&mut self, x: Var) -> Var {
        self.unary(UnaryKind::Square, x)
    }
    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(UnaryKind::Scale(c), x)
    }
    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(UnaryKind::AddScalar(c), x)
    }
    /// `1 - x`.
    pub fn one_minus(&mut self, x: Var) -> Var {
        let n = self.neg(x);
        self.add_scalar(n, 1.0)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        if self.strict {
            if let Some(&bad) = self.value(x).data().iter().find(|&&v| v <= 0.0) {
                return Err(NumericError::NonPositiveLog(bad));
            }
        }
        Ok(self.unary(UnaryKind::Log, x))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64 + Sync + Send,
        op: Op,
    ) -> Result<Var> {
        let out = k::broadcast_binary(name, self.value(a), self.value(b), f)?;
        Ok(self.push(out, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    // -- products ----------------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = k::matmul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    /// `x[..., in] · wᵀ + b` with `w: [out, in]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let out = k::linear(self.value(x), self.value(w), b.map(|b| self.value(b)))?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(out, Op::Linear { x, w, b }, &inputs))
    }

    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = k::bmm(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Bmm(a, b), &[a, b]))
    }

    // -- reductions --------------------------------------------------------

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let out = k::softmax_axis(self.value(x), axis)?;
        Ok(self.push(out, Op::Softmax { x, axis }, &[x]))
    }

    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let out = k::log_softmax_axis(self.value(x), axis)?;
        Ok(self.push(out, Op::LogSoftmax { x, axis }, &[x]))
    }

    /// Log-sum-exp along `axis`; the axis is kept with extent 1.
    pub fn logsumexp(&mut self, x: Var, axis: usize) -> Result<Var> {
        let out = k::logsumexp_axis(self.value(x), axis)?;
        Ok(self.push(out, Op::LogSumExp(x), &[x]))
    }

    /// Sum along `axis`, kept with extent 1.
    pub fn sum(&mut self, x: Var, axis: usize) -> Result<Var> {
        let out = k::sum_axis(self.value(x), axis)?;
        Ok(self.push(out, Op::Sum(x), &[x]))
    }

    pub fn mean(&mut self, x: Var, axis: usize) -> Result<Var> {
        let n = *self
            .shape(x)
            .get(axis)
            .ok_or(NumericError::AxisOutOfRange { op: "mean", axis, rank: self.shape(x).len() })?;
        let s = self.sum(x, axis)?;
        Ok(self.scale(s, 1.0 / n as f64))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::SumAll(x), &[x])
    }

    pub fn cumsum(&mut self, x: Var, axis: usize) -> Result<Var> {
        let out = scan::cumsum_axis(self.value(x), axis)?;
        Ok(self.push(out, Op::Cumsum { x, axis }, &[x]))
    }

    pub fn cumlogsumexp(&mut self, x: Var, axis: usize) -> Result<Var> {
        let out = scan::cumlogsumexp_axis(self.value(x), axis)?;
        Ok(self.push(out, Op::CumLogSumExp { x, axis }, &[x]))
    }

    // -- layout ------------------------------------------------------------

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        Ok(self.push(out, Op::Reshape(x), &[x]))
    }

    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let out = k::permute(self.value(x), perm)?;
        Ok(self.push(out, Op::Permute { x, perm: perm.to_vec() }, &[x]))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let vals: Vec<&Tensor> = xs.iter().map(|&v| self.value(v)).collect();
        let out = k::concat(&vals, axis)?;
        Ok(self.push(out, Op::Concat { xs: xs.to_vec(), axis }, xs))
    }

    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let out = k::narrow(self.value(x), axis, start, len)?;
        Ok(self.push(out, Op::Narrow { x, axis, start }, &[x]))
    }

    /// Zero-pads the last axis to extent `to`.
    pub fn pad_last(&mut self, x: Var, to: usize) -> Result<Var> {
        let axis = self.shape(x).len() - 1;
        let l = self.shape(x)[axis];
        if to < l {
            return Err(NumericError::Domain(format!("pad_last: cannot pad {l} down to {to}")));
        }
        let out = k::unnarrow(self.value(x), axis, 0, to);
        Ok(self.push(out, Op::PadLast(x), &[x]))
    }

    /// Circular shift of the last axis, `out[i] = x[(i - shift) mod L]`.
    pub fn roll_last(&mut self, x: Var, shift: isize) -> Var {
        let out = k::roll_last(self.value(x), shift);
        self.push(out, Op::RollLast { x, shift }, &[x])
    }

    /// Row lookup `table[ids]`, shape `[ids.len(), d]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let out = k::gather_rows(self.value(table), ids)?;
        Ok(self.push(out, Op::Gather { table, ids: ids.to_vec() }, &[table]))
    }

    // -- complex -----------------------------------------------------------

    /// Real `[..., L]` to interleaved complex spectrum `[..., L, 2]`.
    pub fn fft_real(&mut self, x: Var) -> Var {
        let out = fft_rows(self.value(x));
        self.push(out, Op::FftReal(x), &[x])
    }

    /// Interleaved complex `[..., L, 2]` to the real part of its inverse DFT.
    pub fn ifft_real(&mut self, z: Var) -> Result<Var> {
        self.check_complex("ifft_real", z)?;
        let out = ifft_rows_real(self.value(z), 1.0);
        Ok(self.push(out, Op::IfftReal(z), &[z]))
    }

    pub fn cexp(&mut self, z: Var) -> Result<Var> {
        self.check_complex("cexp", z)?;
        let out = k::cexp(self.value(z));
        Ok(self.push(out, Op::CExp(z), &[z]))
    }

    pub fn approx_log(&mut self, z: Var, eps: f64) -> Result<Var> {
        self.check_complex("approx_log", z)?;
        let out = k::approx_log(self.value(z), eps);
        Ok(self.push(out, Op::ApproxLog { x: z, eps }, &[z]))
    }

    fn check_complex(&self, op: &'static str, z: Var) -> Result<()> {
        let s = self.shape(z);
        if s.len() < 2 || s[s.len() - 1] != 2 {
            return Err(NumericError::ShapeMismatch {
                op,
                left: s.to_vec(),
                right: vec![2],
            });
        }
        Ok(())
    }

    // -- fused addressing / loss ------------------------------------------

    pub fn shift3(&mut self, a: Var, s: Var) -> Result<Var> {
        let out = k::shift3(self.value(a), self.value(s))?;
        Ok(self.push(out, Op::Shift3 { a, s }, &[a, s]))
    }

    pub fn sharpen(&mut self, a: Var, gamma: Var) -> Result<Var> {
        let out = k::sharpen(self.value(a), self.value(gamma))?;
        Ok(self.push(out, Op::Sharpen { a, gamma }, &[a, gamma]))
    }

    /// Masked mean cross-entropy of `logits [N, V]` against `targets`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], mask: &[f64]) -> Result<Var> {
        let loss = k::cross_entropy(self.value(logits), targets, mask)?;
        let op = Op::CrossEntropy {
            logits,
            targets: targets.to_vec(),
            mask: mask.to_vec(),
        };
        Ok(self.push(Tensor::scalar(loss), op, &[logits]))
    }

    // -- reverse pass ------------------------------------------------------

    /// Reverse accumulation from a scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let rv = self.value(root);
        if rv.numel() != 1 {
            return Err(NumericError::NotScalar(rv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        if self.nodes[root.0].requires_grad {
            grads[root.0] = Some(Tensor::ones(rv.shape()));
        }
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            for (input, gi) in self.vjp(node, &g)? {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                accumulate(&mut grads[input.0], gi);
            }
            // keep leaf-level results only; intermediates are dropped above
        }
        Ok(Gradients { grads })
    }

    fn vjp(&self, node: &Node, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let val = |v: Var| self.value(v);
        let y = &node.value;
        Ok(match &node.op {
            Op::Leaf => Vec::new(),
            Op::Unary(kind, x) => {
                let xv = val(*x);
                let kind = *kind;
                let d = zip_par(xv.data(), y.data(), move |a, b| kind.derivative(a, b));
                let data = zip_par(&d, g.data(), |a, b| if b == 0.0 { 0.0 } else { a * b });
                vec![(*x, Tensor::from_parts(xv.shape().to_vec(), data))]
            }
            Op::Add(a, b) => vec![
                (*a, k::sum_to_shape(g, val(*a).shape())),
                (*b, k::sum_to_shape(g, val(*b).shape())),
            ],
            Op::Sub(a, b) => {
                let gb = k::sum_to_shape(g, val(*b).shape()).map(|v| -v);
                vec![(*a, k::sum_to_shape(g, val(*a).shape())), (*b, gb)]
            }
            Op::Mul(a, b) => {
                let ga = k::broadcast_binary("mul", g, val(*b), |x, y| x * y)?;
                let gb = k::broadcast_binary("mul", g, val(*a), |x, y| x * y)?;
                vec![
                    (*a, k::sum_to_shape(&ga, val(*a).shape())),
                    (*b, k::sum_to_shape(&gb, val(*b).shape())),
                ]
            }
            Op::Div(a, b) => {
                let ga = k::broadcast_binary("div", g, val(*b), |x, y| x / y)?;
                let gy = k::broadcast_binary("div", g, y, |x, y| x * y)?;
                let gb = k::broadcast_binary("div", &gy, val(*b), |x, y| -x / y)?;
                vec![
                    (*a, k::sum_to_shape(&ga, val(*a).shape())),
                    (*b, k::sum_to_shape(&gb, val(*b).shape())),
                ]
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (p, q, r) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                let mut da = vec![0.0; p * q];
                k::gemm(p, r, q, g.data(), (r, 1), bv.data(), (1, r), &mut da, false);
                let mut db = vec![0.0; q * r];
                k::gemm(q, p, r, av.data(), (1, q), g.data(), (r, 1), &mut db, false);
                vec![
                    (*a, Tensor::from_parts(vec![p, q], da)),
                    (*b, Tensor::from_parts(vec![q, r], db)),
                ]
            }
            Op::Linear { x, w, b } => {
                let (xv, wv) = (val(*x), val(*w));
                let (out_dim, inp) = (wv.shape()[0], wv.shape()[1]);
                let rows = xv.numel() / inp;
                let mut out = Vec::with_capacity(3);
                if self.nodes[x.0].requires_grad {
                    let mut dx = vec![0.0; rows * inp];
                    k::gemm(rows, out_dim, inp, g.data(), (out_dim, 1), wv.data(), (inp, 1), &mut dx, false);
                    out.push((*x, Tensor::from_parts(xv.shape().to_vec(), dx)));
                }
                if self.nodes[w.0].requires_grad {
                    let mut dw = vec![0.0; out_dim * inp];
                    k::gemm(out_dim, rows, inp, g.data(), (1, out_dim), xv.data(), (inp, 1), &mut dw, false);
                    out.push((*w, Tensor::from_parts(vec![out_dim, inp], dw)));
                }
                if let Some(b) = b {
                    let mut db = vec![0.0; out_dim];
                    for row in g.data().chunks(out_dim) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    out.push((*b, Tensor::from_parts(val(*b).shape().to_vec(), db)));
                }
                out
            }
            Op::Bmm(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let r = av.rank();
                let (p, q, n) = (av.shape()[r - 2], av.shape()[r - 1], bv.shape()[r - 1]);
                let groups = av.numel() / (p * q);
                let mut da = vec![0.0; av.numel()];
                k::bmm_into(groups, p, n, q, g.data(), (n, 1), bv.data(), (1, n), &mut da);
                let mut db = vec![0.0; bv.numel()];
                k::bmm_into(groups, q, p, n, av.data(), (1, q), g.data(), (n, 1), &mut db);
                vec![
                    (*a, Tensor::from_parts(av.shape().to_vec(), da)),
                    (*b, Tensor::from_parts(bv.shape().to_vec(), db)),
                ]
            }
            Op::Softmax { x, axis } => vec![(*x, k::softmax_backward(y, g, *axis))],
            Op::LogSoftmax { x, axis } => {
                let gs = k::sum_axis(g, *axis)?;
                let p = y.map(f64::exp);
                let pg = k::broadcast_binary("log_softmax", &p, &gs, |a, b| a * b)?;
                let data = zip_par(g.data(), pg.data(), |a, b| a - b);
                vec![(*x, Tensor::from_parts(y.shape().to_vec(), data))]
            }
            Op::LogSumExp(x) => {
                let xv = val(*x);
                let w = k::broadcast_binary("logsumexp", xv, y, |a, b| {
                    if a == f64::NEG_INFINITY {
                        0.0
                    } else {
                        (a - b).exp()
                    }
                })?;
                let d = k::broadcast_binary("logsumexp", &w, g, |a, b| a * b)?;
                vec![(*x, d)]
            }
            Op::Sum(x) => {
                let xv = val(*x);
                let d = k::broadcast_binary("sum", &Tensor::zeros(xv.shape()), g, |_, b| b)?;
                vec![(*x, d)]
            }
            Op::SumAll(x) => vec![(*x, Tensor::full(val(*x).shape(), g.item()))],
            Op::Cumsum { x, axis } => vec![(*x, scan::cumsum_axis_backward(g, *axis))],
            Op::CumLogSumExp { x, axis } => {
                vec![(*x, scan::cumlogsumexp_axis_backward(val(*x), y, g, *axis))]
            }
            Op::Reshape(x) => vec![(*x, g.reshape(val(*x).shape())?)],
            Op::Permute { x, perm } => {
                let mut inv = vec![0; perm.len()];
                for (i, &p) in perm.iter().enumerate() {
                    inv[p] = i;
                }
                vec![(*x, k::permute(g, &inv)?)]
            }
            Op::Concat { xs, axis } => {
                let mut start = 0;
                let mut out = Vec::with_capacity(xs.len());
                for &x in xs {
                    let l = val(x).shape()[*axis];
                    out.push((x, k::narrow(g, *axis, start, l)?));
                    start += l;
                }
                out
            }
            Op::Narrow { x, axis, start } => {
                vec![(*x, k::unnarrow(g, *axis, *start, val(*x).shape()[*axis]))]
            }
            Op::PadLast(x) => {
                let xv = val(*x);
                let axis = xv.rank() - 1;
                vec![(*x, k::narrow(g, axis, 0, xv.shape()[axis])?)]
            }
            Op::RollLast { x, shift } => vec![(*x, k::roll_last(g, -shift))],
            Op::Gather { table, ids } => {
                let tv = val(*table);
                let d = tv.shape()[1];
                let mut dt = vec![0.0; tv.numel()];
                for (row, &id) in g.data().chunks(d).zip(ids) {
                    for (t, v) in dt[id * d..(id + 1) * d].iter_mut().zip(row) {
                        *t += v;
                    }
                }
                vec![(*table, Tensor::from_parts(tv.shape().to_vec(), dt))]
            }
            Op::FftReal(x) => {
                let l = *val(*x).shape().last().unwrap();
                vec![(*x, ifft_rows_real(g, l as f64))]
            }
            Op::IfftReal(z) => {
                let l = *y.shape().last().unwrap();
                let spec = fft_rows(g);
                vec![(*z, spec.map(|v| v / l as f64))]
            }
            Op::CExp(z) => vec![(*z, k::cexp_backward(y, g))],
            Op::ApproxLog { x, eps } => vec![(*x, k::approx_log_backward(val(*x), g, *eps))],
            Op::Shift3 { a, s } => {
                let (da, ds) = k::shift3_backward(val(*a), val(*s), g);
                vec![(*a, da), (*s, ds)]
            }
            Op::Sharpen { a, gamma } => {
                let (da, dg) = k::sharpen_backward(val(*a), val(*gamma), y, g);
                vec![(*a, da), (*gamma, dg)]
            }
            Op::CrossEntropy { logits, targets, mask } => {
                vec![(*logits, k::cross_entropy_backward(val(*logits), targets, mask, g.item()))]
            }
        })
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        None => *slot = Some(g),
        Some(acc) => {
            debug_assert_eq!(acc.numel(), g.numel());
            for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
    }
}
