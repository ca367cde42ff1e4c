//! Prefix scans over associative operators and the log-space first-order
//! linear recurrence built from them.
//!
//! Slice scans use a blocked two-pass schedule: each chunk is reduced on its
//! own, the chunk totals are scanned with a work-efficient up/down sweep, and
//! each chunk is then re-scanned from its carried-in prefix. With chunk length
//! about `log2 T` the schedule has `O(T)` work and `O(log T)` depth.

use rayon::prelude::*;

use crate::numeric::kernels::{logaddexp, split_axis, PAR_MIN};
use crate::numeric::{Graph, NumericError, Result, Tensor, Var};

/// Associative operator with an identity element.
pub trait Monoid: Sync {
    type Item: Copy + Send + Sync;
    fn identity(&self) -> Self::Item;
    /// `combine(earlier, later)`; need not be commutative.
    fn combine(&self, a: Self::Item, b: Self::Item) -> Self::Item;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sum;

impl Monoid for Sum {
    type Item = f64;
    fn identity(&self) -> f64 {
        0.0
    }
    fn combine(&self, a: f64, b: f64) -> f64 {
        a + b
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LogAddExp;

impl Monoid for LogAddExp {
    type Item = f64;
    fn identity(&self) -> f64 {
        f64::NEG_INFINITY
    }
    fn combine(&self, a: f64, b: f64) -> f64 {
        logaddexp(a, b)
    }
}

/// Composition of affine maps `v -> a·v + b`, applied left to right.
#[derive(Debug, Clone, Copy, Default)]
pub struct Affine;

impl Monoid for Affine {
    type Item = (f64, f64);
    fn identity(&self) -> (f64, f64) {
        (1.0, 0.0)
    }
    fn combine(&self, (a1, b1): (f64, f64), (a2, b2): (f64, f64)) -> (f64, f64) {
        (a1 * a2, a2 * b1 + b2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// Plain left-to-right loop.
    Sequential,
    /// Reduce-then-propagate over this many chunks.
    Blocked { chunks: usize },
    /// Blocked with chunk length `ceil(log2 T)`, giving logarithmic depth.
    Logarithmic,
}

impl Schedule {
    /// Blocked over the rayon pool for long inputs, sequential otherwise.
    pub fn auto(len: usize) -> Schedule {
        let threads = rayon::current_num_threads();
        if threads > 1 && len >= 4096 {
            Schedule::Blocked { chunks: 4 * threads }
        } else {
            Schedule::Sequential
        }
    }

    fn chunk_len(self, len: usize) -> usize {
        match self {
            Schedule::Sequential => len.max(1),
            Schedule::Blocked { chunks } => len.div_ceil(chunks.max(1)).max(1),
            Schedule::Logarithmic => (usize::BITS - len.max(1).leading_zeros()) as usize,
        }
    }
}

/// Operation counts of one scan: `work` is the number of `combine` calls,
/// `depth` the longest chain of dependent calls under unbounded parallelism.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScanStats {
    pub work: usize,
    pub depth: usize,
}

/// In-place inclusive scan of `xs`.
pub fn inclusive_scan<M: Monoid>(op: &M, xs: &mut [M::Item], schedule: Schedule) -> ScanStats {
    let len = xs.len();
    if len == 0 {
        return ScanStats::default();
    }
    let chunk = schedule.chunk_len(len);
    if chunk >= len {
        for i in 1..len {
            xs[i] = op.combine(xs[i - 1], xs[i]);
        }
        return ScanStats {
            work: len - 1,
            depth: len - 1,
        };
    }
    let n_chunks = len.div_ceil(chunk);
    let mut stats = ScanStats::default();

    // pass 1: chunk totals
    let reduce = |c: &[M::Item]| c[1..].iter().fold(c[0], |acc, &v| op.combine(acc, v));
    let mut totals: Vec<M::Item> = if len >= PAR_MIN {
        xs.par_chunks(chunk).map(reduce).collect()
    } else {
        xs.chunks(chunk).map(reduce).collect()
    };
    stats.work += len - n_chunks;
    stats.depth += chunk - 1;

    // pass 2: exclusive scan of the totals
    let tree = exclusive_tree_scan(op, &mut totals);
    stats.work += tree.work;
    stats.depth += tree.depth;

    // pass 3: propagate carried prefixes
    let propagate = |(c, prefix): (&mut [M::Item], &M::Item)| {
        let mut acc = *prefix;
        for v in c.iter_mut() {
            acc = op.combine(acc, *v);
            *v = acc;
        }
    };
    if len >= PAR_MIN {
        xs.par_chunks_mut(chunk).zip(totals.par_iter()).for_each(propagate);
    } else {
        xs.chunks_mut(chunk).zip(totals.iter()).for_each(propagate);
    }
    stats.work += len;
    stats.depth += chunk;
    stats
}

/// Work-efficient up-sweep/down-sweep exclusive scan.
pub fn exclusive_tree_scan<M: Monoid>(op: &M, xs: &mut [M::Item]) -> ScanStats {
    let len = xs.len();
    let size = len.next_power_of_two();
    let mut t = xs.to_vec();
    t.resize(size, op.identity());
    let mut stats = ScanStats::default();
    let mut stride = 2;
    while stride <= size {
        let half = stride / 2;
        for i in (stride - 1..size).step_by(stride) {
            t[i] = op.combine(t[i - half], t[i]);
            stats.work += 1;
        }
        stats.depth += 1;
        stride *= 2;
    }
    t[size - 1] = op.identity();
    let mut stride = size;
    while stride >= 2 {
        let half = stride / 2;
        for i in (stride - 1..size).step_by(stride) {
            let left = t[i - half];
            t[i - half] = t[i];
            t[i] = op.combine(t[i], left);
            stats.work += 1;
        }
        stats.depth += 1;
        stride /= 2;
    }
    xs.copy_from_slice(&t[..len]);
    stats
}

// ---------------------------------------------------------------------------
// tensor lanes

/// Scans every lane of `x` along `axis`. `reverse` scans from the end.
fn scan_lanes(
    x: &Tensor,
    axis: usize,
    op: &'static str,
    reverse: bool,
    identity: f64,
    combine: impl Fn(f64, f64) -> f64 + Sync + Send,
) -> Result<Tensor> {
    let (outer, len, inner) = split_axis(op, x.shape(), axis)?;
    let mut out = x.to_vec();
    let lanes = outer * inner;
    let threads = rayon::current_num_threads();
    if lanes == 1 && !reverse && threads > 1 && len >= 4096 {
        let m = FnMonoid(identity, &combine);
        inclusive_scan(&m, &mut out, Schedule::auto(len));
        return Ok(Tensor::from_parts(x.shape().to_vec(), out));
    }
    let block = len * inner;
    let run = |blk: &mut [f64]| {
        if reverse {
            for t in (0..len - 1).rev() {
                let (head, tail) = blk.split_at_mut((t + 1) * inner);
                let cur = &mut head[t * inner..];
                for (c, &n) in cur.iter_mut().zip(&tail[..inner]) {
                    *c = combine(n, *c);
                }
            }
        } else {
            for t in 1..len {
                let (head, tail) = blk.split_at_mut(t * inner);
                let prev = &head[(t - 1) * inner..];
                for (c, &p) in tail[..inner].iter_mut().zip(prev) {
                    *c = combine(p, *c);
                }
            }
        }
    };
    if out.len() >= PAR_MIN && outer > 1 {
        out.par_chunks_mut(block).for_each(run);
    } else {
        out.chunks_mut(block).for_each(run);
    }
    Ok(Tensor::from_parts(x.shape().to_vec(), out))
}

struct FnMonoid<'a, F>(f64, &'a F);

impl<F: Fn(f64, f64) -> f64 + Sync> Monoid for FnMonoid<'_, F> {
    type Item = f64;
    fn identity(&self) -> f64 {
        self.0
    }
    fn combine(&self, a: f64, b: f64) -> f64 {
        (self.1)(a, b)
    }
}

/// `out[t] = Σ_{i≤t} x[i]` along `axis`.
pub fn cumsum_axis(x: &Tensor, axis: usize) -> Result<Tensor> {
    scan_lanes(x, axis, "cumsum", false, 0.0, |a, b| a + b)
}

/// `out[t] = log Σ_{i≤t} exp(x[i])` along `axis`, with running-max
/// renormalisation; `-inf` entries contribute nothing.
pub fn cumlogsumexp_axis(x: &Tensor, axis: usize) -> Result<Tensor> {
    scan_lanes(x, axis, "cumlogsumexp", false, f64::NEG_INFINITY, logaddexp)
}

/// Adjoint of [`cumsum_axis`]: reverse cumulative sum of `g`.
pub fn cumsum_axis_backward(g: &Tensor, axis: usize) -> Tensor {
    scan_lanes(g, axis, "cumsum", true, 0.0, |later, cur| later + cur).expect("axis checked in forward")
}

/// Adjoint of [`cumlogsumexp_axis`] given input `x`, output `y` and upstream
/// gradient `g`.
///
/// `∂y_s/∂x_t = exp(x_t − y_s)` for `s ≥ t`, so
/// `dx_t = exp(x_t − y_t) · R_t` with `R_t = g_t + exp(y_t − y_{t+1}) R_{t+1}`.
pub fn cumlogsumexp_axis_backward(x: &Tensor, y: &Tensor, g: &Tensor, axis: usize) -> Tensor {
    let (outer, len, inner) = split_axis("cumlogsumexp", x.shape(), axis).expect("axis checked in forward");
    let block = len * inner;
    let mut out = vec![0.0; x.numel()];
    let run = |(o, dst): (usize, &mut [f64])| {
        let base = o * block;
        let (xs, ys, gs) = (
            &x.data()[base..base + block],
            &y.data()[base..base + block],
            &g.data()[base..base + block],
        );
        for j in 0..inner {
            let mut r = 0.0;
            for t in (0..len).rev() {
                let i = t * inner + j;
                if t + 1 < len {
                    let next = ys[i + inner];
                    let decay = if ys[i] == f64::NEG_INFINITY { 0.0 } else { (ys[i] - next).exp() };
                    r *= decay;
                }
                r += gs[i];
                dst[i] = if xs[i] == f64::NEG_INFINITY { 0.0 } else { (xs[i] - ys[i]).exp() * r };
            }
        }
    };
    if out.len() >= PAR_MIN && outer > 1 {
        out.par_chunks_mut(block).enumerate().for_each(run);
    } else {
        out.chunks_mut(block).enumerate().for_each(run);
    }
    Tensor::from_parts(x.shape().to_vec(), out)
}

// ---------------------------------------------------------------------------
// log-space linear recurrence

/// Coefficients of `v_t = α_t v_{t−1} + β_t`, held as logs.
#[derive(Debug, Clone)]
pub struct ScanCoefficients {
    /// `log α_t`, time on axis 0.
    pub alpha: Tensor,
    /// `log β_t`, broadcast-compatible with `alpha`.
    pub beta_log: Tensor,
}

impl ScanCoefficients {
    /// Clamps `alpha` into `[ε, 1−ε]` and takes logs of both factors;
    /// `beta` must be non-negative.
    pub fn from_linear(alpha: &Tensor, beta: &Tensor, eps: f64) -> Result<ScanCoefficients> {
        if let Some(&b) = beta.data().iter().find(|b| !(**b >= 0.0) || !b.is_finite()) {
            return Err(NumericError::Domain(format!("recurrence input {b} is not a finite non-negative value")));
        }
        let alpha = alpha.map(|a| a.clamp(eps, 1.0 - eps).ln());
        let coeffs = ScanCoefficients {
            alpha,
            beta_log: beta.map(f64::ln),
        };
        coeffs.validate()?;
        Ok(coeffs)
    }

    fn validate(&self) -> Result<()> {
        if let Some(&a) = self.alpha.data().iter().find(|a| !a.is_finite()) {
            return Err(NumericError::Domain(format!("decay coefficient {a} is not finite")));
        }
        if let Some(&b) = self.beta_log.data().iter().find(|b| b.is_nan() || **b == f64::INFINITY) {
            return Err(NumericError::Domain(format!("input coefficient {b} is not finite")));
        }
        Ok(())
    }
}

/// Solves `v_t = α_t v_{t−1} + β_t` along axis 0 as
/// `exp(α*_t + cumlogsumexp(B − α*)_t)` where `α* = cumsum(log α)`.
/// `v0` defaults to zero and must be non-negative.
pub fn linear_recurrence_log(c: &ScanCoefficients, v0: Option<&Tensor>) -> Result<Tensor> {
    c.validate()?;
    let mut g = Graph::no_grad();
    let alpha = g.constant(c.alpha.clone());
    let beta = g.constant(c.beta_log.clone());
    let log_v0 = match v0 {
        Some(v) => {
            if v.data().iter().any(|x| !(*x >= 0.0)) {
                return Err(NumericError::Domain("initial state must be non-negative".into()));
            }
            Some(g.constant(v.map(f64::ln)))
        }
        None => None,
    };
    let v = linear_recurrence_log_graph(&mut g, alpha, beta, log_v0, 0)?;
    Ok(g.value(v).clone())
}

/// Differentiable form of [`linear_recurrence_log`] on a tape, scanning
/// `axis`. `log_alpha` and `beta_log` must broadcast to a common shape;
/// `log_v0` has that shape with `axis` removed or kept at extent 1.
pub fn linear_recurrence_log_graph(
    g: &mut Graph,
    log_alpha: Var,
    beta_log: Var,
    log_v0: Option<Var>,
    axis: usize,
) -> Result<Var> {
    let a_star = g.cumsum(log_alpha, axis)?;
    let shifted = g.sub(beta_log, a_star)?;
    let h = match log_v0 {
        None => g.cumlogsumexp(shifted, axis)?,
        Some(v0) => {
            let mut shape = g.shape(shifted).to_vec();
            shape[axis] = 1;
            let v0 = if g.shape(v0) == shape.as_slice() {
                v0
            } else {
                g.reshape(v0, &shape)?
            };
            let len = g.shape(shifted)[axis];
            let joined = g.concat(&[v0, shifted], axis)?;
            let h = g.cumlogsumexp(joined, axis)?;
            g.narrow(h, axis, 1, len)?
        }
    };
    let log_v = g.add(a_star, h)?;
    Ok(g.exp(log_v))
}
