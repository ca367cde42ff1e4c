//! Pure forward/backward kernels over raw tensors. The tape in
//! [`super::Graph`] is a thin recorder on top of these.

use rayon::prelude::*;

use super::{NumericError, Result, Tensor};

/// Element count above which kernels fan out over the rayon pool.
pub const PAR_MIN: usize = 1 << 14;

pub fn map_par(x: &[f64], f: impl Fn(f64) -> f64 + Sync + Send) -> Vec<f64> {
    if x.len() >= PAR_MIN {
        x.par_iter().map(|&v| f(v)).collect()
    } else {
        x.iter().map(|&v| f(v)).collect()
    }
}

pub fn zip_par(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64 + Sync + Send) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    if a.len() >= PAR_MIN {
        a.par_iter().zip(b.par_iter()).map(|(&x, &y)| f(x, y)).collect()
    } else {
        a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
    }
}

// ---------------------------------------------------------------------------
// scalar functions

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Positive nonlinearity used for memory contents: `x + 0.5` for `x >= 0`,
/// `sigmoid(x)` otherwise.
pub fn g_nonlin(x: f64) -> f64 {
    if x >= 0.0 {
        x + 0.5
    } else {
        sigmoid(x)
    }
}

pub fn g_nonlin_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        let s = sigmoid(x);
        s * (1.0 - s)
    }
}

/// `ln g(x)` without underflow for very negative `x`.
pub fn log_g(x: f64) -> f64 {
    if x >= 0.0 {
        (x + 0.5).ln()
    } else {
        -softplus(-x)
    }
}

pub fn log_g_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (x + 0.5)
    } else {
        sigmoid(-x)
    }
}

/// `ln(1 - e^x)` for `x <= 0`.
pub fn log1mexp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

pub fn log1mexp_grad(x: f64) -> f64 {
    // d/dx ln(1 - e^x) = -1 / (e^{-x} - 1)
    -1.0 / (-x).exp_m1()
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    let dinner = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
}

/// `ln(e^a + e^b)` with `-inf` handled.
pub fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

// ---------------------------------------------------------------------------
// broadcasting

pub fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = if da == db || db == 1 {
            da
        } else if da == 1 {
            db
        } else {
            return Err(NumericError::ShapeMismatch {
                op,
                left: a.to_vec(),
                right: b.to_vec(),
            });
        };
    }
    Ok(out)
}

/// Strides of `shape` when viewed at `out_shape`'s rank; broadcast axes get
/// stride zero.
fn broadcast_strides(shape: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let mut strides = vec![0; rank];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        let oi = i + rank - shape.len();
        strides[oi] = if shape[i] == 1 && out_shape[oi] != 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

/// Offsets of the first element of every output row (row = last axis).
fn row_offsets(out_shape: &[usize], strides: &[usize], row: usize) -> usize {
    let mut rem = row;
    let mut off = 0;
    for ax in (0..out_shape.len().saturating_sub(1)).rev() {
        let d = out_shape[ax];
        off += (rem % d) * strides[ax];
        rem /= d;
    }
    off
}

pub fn broadcast_binary(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64 + Sync + Send,
) -> Result<Tensor> {
    if a.shape() == b.shape() {
        return Ok(Tensor::from_parts(a.shape().to_vec(), zip_par(a.data(), b.data(), f)));
    }
    let out_shape = broadcast_shape(op, a.shape(), b.shape())?;
    if b.numel() == 1 && out_shape == a.shape() {
        let bv = b.item();
        return Ok(Tensor::from_parts(out_shape, map_par(a.data(), |x| f(x, bv))));
    }
    if a.numel() == 1 && out_shape == b.shape() {
        let av = a.item();
        return Ok(Tensor::from_parts(out_shape, map_par(b.data(), |y| f(av, y))));
    }
    let sa = broadcast_strides(a.shape(), &out_shape);
    let sb = broadcast_strides(b.shape(), &out_shape);
    let last = *out_shape.last().unwrap_or(&1);
    let (la, lb) = (*sa.last().unwrap_or(&0), *sb.last().unwrap_or(&0));
    let total: usize = out_shape.iter().product();
    let mut out = vec![0.0; total];
    let (ad, bd) = (a.data(), b.data());
    let fill = |row: usize, dst: &mut [f64]| {
        let oa = row_offsets(&out_shape, &sa, row);
        let ob = row_offsets(&out_shape, &sb, row);
        for (j, o) in dst.iter_mut().enumerate() {
            *o = f(ad[oa + j * la], bd[ob + j * lb]);
        }
    };
    if total >= PAR_MIN {
        out.par_chunks_mut(last).enumerate().for_each(|(r, dst)| fill(r, dst));
    } else {
        out.chunks_mut(last).enumerate().for_each(|(r, dst)| fill(r, dst));
    }
    Ok(Tensor::from_parts(out_shape, out))
}

/// Sums `g` down to `shape`, reversing a broadcast.
pub fn sum_to_shape(g: &Tensor, shape: &[usize]) -> Tensor {
    if g.shape() == shape {
        return g.clone();
    }
    let n: usize = shape.iter().product();
    if n == 1 {
        return Tensor::from_parts(shape.to_vec(), vec![g.sum()]);
    }
    let strides = broadcast_strides(shape, g.shape());
    let last = *g.shape().last().unwrap_or(&1);
    let ls = *strides.last().unwrap_or(&0);
    let mut out = vec![0.0; n];
    for (row, src) in g.data().chunks(last).enumerate() {
        let off = row_offsets(g.shape(), &strides, row);
        for (j, v) in src.iter().enumerate() {
            out[off + j * ls] += v;
        }
    }
    Tensor::from_parts(shape.to_vec(), out)
}

// ---------------------------------------------------------------------------
// axis helpers

/// Splits `shape` around `axis` into `(outer, len, inner)`.
pub fn split_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(NumericError::AxisOutOfRange {
            op,
            axis,
            rank: shape.len(),
        });
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

/// Applies `f` to each contiguous `len * inner` block, in parallel when large.
pub fn for_each_block(
    data: &mut [f64],
    block: usize,
    f: impl Fn(usize, &mut [f64]) + Sync + Send,
) {
    if data.len() >= PAR_MIN && data.len() / block > 1 {
        data.par_chunks_mut(block).enumerate().for_each(|(i, b)| f(i, b));
    } else {
        data.chunks_mut(block).enumerate().for_each(|(i, b)| f(i, b));
    }
}

pub fn softmax_axis(x: &Tensor, axis: usize) -> Result<Tensor> {
    let (_, len, inner) = split_axis("softmax", x.shape(), axis)?;
    let mut out = x.to_vec();
    for_each_block(&mut out, len * inner, |_, blk| {
        let mut mx = vec![f64::NEG_INFINITY; inner];
        for t in 0..len {
            for (m, v) in mx.iter_mut().zip(&blk[t * inner..(t + 1) * inner]) {
                *m = m.max(*v);
            }
        }
        let mut sum = vec![0.0; inner];
        for t in 0..len {
            for (i, v) in blk[t * inner..(t + 1) * inner].iter_mut().enumerate() {
                *v = if mx[i] == f64::NEG_INFINITY { 0.0 } else { (*v - mx[i]).exp() };
                sum[i] += *v;
            }
        }
        for t in 0..len {
            for (i, v) in blk[t * inner..(t + 1) * inner].iter_mut().enumerate() {
                *v /= sum[i];
            }
        }
    });
    Ok(Tensor::from_parts(x.shape().to_vec(), out))
}

/// Vector-Jacobian product of softmax given its output `y`.
pub fn softmax_backward(y: &Tensor, g: &Tensor, axis: usize) -> Tensor {
    let (_, len, inner) = split_axis("softmax", y.shape(), axis).expect("validated in forward");
    let mut out = g.to_vec();
    let yd = y.data();
    let block = len * inner;
    for_each_block(&mut out, block, |b, blk| {
        let yb = &yd[b * block..(b + 1) * block];
        let mut dot = vec![0.0; inner];
        for t in 0..len {
            for i in 0..inner {
                dot[i] += yb[t * inner + i] * blk[t * inner + i];
            }
        }
        for t in 0..len {
            for i in 0..inner {
                let k = t * inner + i;
                blk[k] = yb[k] * (blk[k] - dot[i]);
            }
        }
    });
    Tensor::from_parts(y.shape().to_vec(), out)
}

/// Log-sum-exp along `axis`, keeping the axis with extent 1.
pub fn logsumexp_axis(x: &Tensor, axis: usize) -> Result<Tensor> {
    let (outer, len, inner) = split_axis("logsumexp", x.shape(), axis)?;
    let xd = x.data();
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        let blk = &xd[o * len * inner..(o + 1) * len * inner];
        for i in 0..inner {
            let mx = (0..len).map(|t| blk[t * inner + i]).fold(f64::NEG_INFINITY, f64::max);
            out[o * inner + i] = if mx == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else if mx == f64::INFINITY {
                f64::INFINITY
            } else {
                mx + (0..len).map(|t| (blk[t * inner + i] - mx).exp()).sum::<f64>().ln()
            };
        }
    }
    let mut shape = x.shape().to_vec();
    shape[axis] = 1;
    Ok(Tensor::from_parts(shape, out))
}

pub fn log_softmax_axis(x: &Tensor, axis: usize) -> Result<Tensor> {
    let lse = logsumexp_axis(x, axis)?;
    broadcast_binary("log_softmax", x, &lse, |a, b| if a == f64::NEG_INFINITY { a } else { a - b })
}

pub fn sum_axis(x: &Tensor, axis: usize) -> Result<Tensor> {
    let (outer, len, inner) = split_axis("sum", x.shape(), axis)?;
    let xd = x.data();
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        for t in 0..len {
            let src = &xd[(o * len + t) * inner..(o * len + t + 1) * inner];
            for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    let mut shape = x.shape().to_vec();
    shape[axis] = 1;
    Ok(Tensor::from_parts(shape, out))
}

// ---------------------------------------------------------------------------
// matrix products

/// `c (m×n) [+]= a (m×k) · b (k×n)` with arbitrary strides on `a`, `b`;
/// `c` is row-major and contiguous.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert!(c.len() >= m * n);
    let beta = if accumulate { 1.0 } else { 0.0 };
    let run = |rows: usize, a_off: usize, c_blk: &mut [f64]| {
        // SAFETY: every index touched by dgemm lies within the slices: rows
        // of `a` starting at `a_off` use the caller's strides, which were
        // laid out for the full `m×k` operand, and `c_blk` holds `rows×n`.
        unsafe {
            matrixmultiply::dgemm(
                rows,
                k,
                n,
                1.0,
                a.as_ptr().add(a_off),
                a_strides.0 as isize,
                a_strides.1 as isize,
                b.as_ptr(),
                b_strides.0 as isize,
                b_strides.1 as isize,
                beta,
                c_blk.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    };
    let work = m * k * n;
    let threads = rayon::current_num_threads();
    if work >= (1 << 18) && threads > 1 && m >= 2 * threads {
        let rows_per = m.div_ceil(threads * 2);
        c[..m * n]
            .par_chunks_mut(rows_per * n)
            .enumerate()
            .for_each(|(ci, blk)| {
                let r0 = ci * rows_per;
                run(blk.len() / n, r0 * a_strides.0, blk);
            });
    } else {
        run(m, 0, &mut c[..m * n]);
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(NumericError::ShapeMismatch {
            op: "matmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut c = vec![0.0; m * n];
    gemm(m, k, n, a.data(), (k, 1), b.data(), (n, 1), &mut c, false);
    Ok(Tensor::from_parts(vec![m, n], c))
}

/// `y[..., out] = x[..., in] · wᵀ (+ b)` for `w` of shape `[out, in]`.
pub fn linear(x: &Tensor, w: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let inp = *x.shape().last().unwrap_or(&0);
    if w.rank() != 2 || w.shape()[1] != inp {
        return Err(NumericError::ShapeMismatch {
            op: "linear",
            left: x.shape().to_vec(),
            right: w.shape().to_vec(),
        });
    }
    let out_dim = w.shape()[0];
    let rows = x.numel() / inp;
    let mut y = match bias {
        Some(b) => {
            if b.numel() != out_dim {
                return Err(NumericError::ShapeMismatch {
                    op: "linear bias",
                    left: w.shape().to_vec(),
                    right: b.shape().to_vec(),
                });
            }
            b.data().iter().copied().cycle().take(rows * out_dim).collect()
        }
        None => vec![0.0; rows * out_dim],
    };
    gemm(rows, inp, out_dim, x.data(), (inp, 1), w.data(), (1, inp), &mut y, bias.is_some());
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = out_dim;
    Ok(Tensor::from_parts(shape, y))
}

/// Batched product over matching leading axes:
/// `[..., p, q] · [..., q, r] -> [..., p, r]`.
pub fn bmm(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let err = || NumericError::ShapeMismatch {
        op: "bmm",
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    };
    if a.rank() < 2 || a.rank() != b.rank() {
        return Err(err());
    }
    let r = a.rank();
    let (p, q, q2, n) = (a.shape()[r - 2], a.shape()[r - 1], b.shape()[r - 2], b.shape()[r - 1]);
    if q != q2 || a.shape()[..r - 2] != b.shape()[..r - 2] {
        return Err(err());
    }
    let groups: usize = a.shape()[..r - 2].iter().product();
    let mut c = vec![0.0; groups * p * n];
    bmm_into(groups, p, q, n, a.data(), (q, 1), b.data(), (n, 1), &mut c);
    let mut shape = a.shape().to_vec();
    shape[r - 1] = n;
    Ok(Tensor::from_parts(shape, c))
}

/// Group-wise gemm; operand strides describe each group's matrix.
#[allow(clippy::too_many_arguments)]
pub fn bmm_into(
    groups: usize,
    p: usize,
    q: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    c: &mut [f64],
) {
    let run = |g: usize, blk: &mut [f64]| {
        let ao = &a[g * p * q..(g + 1) * p * q];
        let bo = &b[g * q * n..(g + 1) * q * n];
        if p * q * n <= 4096 {
            // tiny products: a plain loop beats the packing overhead
            for i in 0..p {
                for kk in 0..q {
                    let av = ao[i * a_strides.0 + kk * a_strides.1];
                    if av == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        blk[i * n + j] += av * bo[kk * b_strides.0 + j * b_strides.1];
                    }
                }
            }
        } else {
            gemm(p, q, n, ao, a_strides, bo, b_strides, blk, false);
        }
    };
    if groups * p * q * n >= PAR_MIN && groups > 1 {
        c.par_chunks_mut(p * n).enumerate().for_each(|(g, blk)| run(g, blk));
    } else {
        c.chunks_mut(p * n).enumerate().for_each(|(g, blk)| run(g, blk));
    }
}

// ---------------------------------------------------------------------------
// layout

pub fn permute(x: &Tensor, perm: &[usize]) -> Result<Tensor> {
    let rank = x.rank();
    let mut seen = vec![false; rank];
    if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
        return Err(NumericError::Domain(format!(
            "permute: {perm:?} is not a permutation of rank {rank}"
        )));
    }
    let in_strides = contiguous_strides(x.shape());
    let out_shape: Vec<usize> = perm.iter().map(|&p| x.shape()[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let last = *out_shape.last().unwrap_or(&1);
    let ls = *strides.last().unwrap_or(&1);
    let xd = x.data();
    let mut out = vec![0.0; x.numel()];
    let fill = |row: usize, dst: &mut [f64]| {
        let off = row_offsets(&out_shape, &strides, row);
        for (j, o) in dst.iter_mut().enumerate() {
            *o = xd[off + j * ls];
        }
    };
    if out.len() >= PAR_MIN {
        out.par_chunks_mut(last).enumerate().for_each(|(r, d)| fill(r, d));
    } else {
        out.chunks_mut(last).enumerate().for_each(|(r, d)| fill(r, d));
    }
    Ok(Tensor::from_parts(out_shape, out))
}

pub fn contiguous_strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

pub fn concat(xs: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = xs.first().ok_or_else(|| NumericError::Domain("concat of nothing".into()))?;
    let (outer, _, inner) = split_axis("concat", first.shape(), axis)?;
    let mut total = 0;
    for x in xs {
        let ok = x.rank() == first.rank()
            && x.shape()[..axis] == first.shape()[..axis]
            && x.shape()[axis + 1..] == first.shape()[axis + 1..];
        if !ok {
            return Err(NumericError::ShapeMismatch {
                op: "concat",
                left: first.shape().to_vec(),
                right: x.shape().to_vec(),
            });
        }
        total += x.shape()[axis];
    }
    let mut out = Vec::with_capacity(outer * total * inner);
    for o in 0..outer {
        for x in xs {
            let l = x.shape()[axis];
            out.extend_from_slice(&x.data()[o * l * inner..(o + 1) * l * inner]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = total;
    Ok(Tensor::from_parts(shape, out))
}

pub fn narrow(x: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    let (outer, full, inner) = split_axis("narrow", x.shape(), axis)?;
    if len == 0 || start + len > full {
        return Err(NumericError::Domain(format!(
            "narrow: range {start}..{} outside axis of extent {full}",
            start + len
        )));
    }
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * full + start) * inner;
        out.extend_from_slice(&x.data()[base..base + len * inner]);
    }
    let mut shape = x.shape().to_vec();
    shape[axis] = len;
    Ok(Tensor::from_parts(shape, out))
}

/// Inverse of [`narrow`]: places `g` into a zero tensor of extent `full`.
pub fn unnarrow(g: &Tensor, axis: usize, start: usize, full: usize) -> Tensor {
    let (outer, len, inner) = split_axis("unnarrow", g.shape(), axis).expect("validated");
    let mut out = vec![0.0; outer * full * inner];
    for o in 0..outer {
        let base = (o * full + start) * inner;
        out[base..base + len * inner].copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
    }
    let mut shape = g.shape().to_vec();
    shape[axis] = full;
    Tensor::from_parts(shape, out)
}

/// Circular shift along the last axis: `out[i] = x[(i - shift) mod L]`.
pub fn roll_last(x: &Tensor, shift: isize) -> Tensor {
    let l = *x.shape().last().unwrap_or(&1);
    let s = shift.rem_euclid(l as isize) as usize;
    let mut out = vec![0.0; x.numel()];
    for (dst, src) in out.chunks_mut(l).zip(x.data().chunks(l)) {
        dst[s..].copy_from_slice(&src[..l - s]);
        dst[..s].copy_from_slice(&src[l - s..]);
    }
    Tensor::from_parts(x.shape().to_vec(), out)
}

pub fn gather_rows(table: &Tensor, ids: &[usize]) -> Result<Tensor> {
    if table.rank() != 2 {
        return Err(NumericError::Domain("gather: table must be 2-D".into()));
    }
    let (rows, d) = (table.shape()[0], table.shape()[1]);
    let mut out = Vec::with_capacity(ids.len() * d);
    for &id in ids {
        if id >= rows {
            return Err(NumericError::Domain(format!("gather: id {id} out of {rows} rows")));
        }
        out.extend_from_slice(&table.data()[id * d..(id + 1) * d]);
    }
    Ok(Tensor::from_parts(vec![ids.len(), d], out))
}

// ---------------------------------------------------------------------------
// fused addressing kernels

/// Three-tap circular convolution along the last axis with per-row shift
/// strengths `[left, stay, right]`:
/// `out[i] = a[i+1]·left + a[i]·stay + a[i-1]·right`.
pub fn shift3(a: &Tensor, s: &Tensor) -> Result<Tensor> {
    let m = *a.shape().last().unwrap_or(&0);
    if s.shape().last() != Some(&3) || a.numel() / m != s.numel() / 3 {
        return Err(NumericError::ShapeMismatch {
            op: "shift3",
            left: a.shape().to_vec(),
            right: s.shape().to_vec(),
        });
    }
    let mut out = vec![0.0; a.numel()];
    for ((dst, row), sv) in out.chunks_mut(m).zip(a.data().chunks(m)).zip(s.data().chunks(3)) {
        for i in 0..m {
            let next = row[(i + 1) % m];
            let prev = row[(i + m - 1) % m];
            dst[i] = next * sv[0] + row[i] * sv[1] + prev * sv[2];
        }
    }
    Ok(Tensor::from_parts(a.shape().to_vec(), out))
}

pub fn shift3_backward(a: &Tensor, s: &Tensor, g: &Tensor) -> (Tensor, Tensor) {
    let m = *a.shape().last().unwrap();
    let mut da = vec![0.0; a.numel()];
    let mut ds = vec![0.0; s.numel()];
    for (((da_row, ds_row), (row, sv)), gr) in da
        .chunks_mut(m)
        .zip(ds.chunks_mut(3))
        .zip(a.data().chunks(m).zip(s.data().chunks(3)))
        .zip(g.data().chunks(m))
    {
        for j in 0..m {
            let gp = gr[(j + m - 1) % m];
            let gn = gr[(j + 1) % m];
            da_row[j] = gp * sv[0] + gr[j] * sv[1] + gn * sv[2];
            ds_row[0] += gr[j] * row[(j + 1) % m];
            ds_row[1] += gr[j] * row[j];
            ds_row[2] += gr[j] * row[(j + m - 1) % m];
        }
    }
    (
        Tensor::from_parts(a.shape().to_vec(), da),
        Tensor::from_parts(s.shape().to_vec(), ds),
    )
}

/// Sharpening `a^γ / Σ a^γ` evaluated as `exp(γ ln a - logsumexp(γ ln a))`
/// along the last axis; `gamma` holds one exponent per row.
pub fn sharpen(a: &Tensor, gamma: &Tensor) -> Result<Tensor> {
    let m = *a.shape().last().unwrap_or(&0);
    if a.numel() / m != gamma.numel() {
        return Err(NumericError::ShapeMismatch {
            op: "sharpen",
            left: a.shape().to_vec(),
            right: gamma.shape().to_vec(),
        });
    }
    let mut out = vec![0.0; a.numel()];
    for ((dst, row), &gm) in out.chunks_mut(m).zip(a.data().chunks(m)).zip(gamma.data()) {
        let mut mx = f64::NEG_INFINITY;
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = if v > 0.0 { gm * v.ln() } else { f64::NEG_INFINITY };
            mx = mx.max(*d);
        }
        if mx == f64::NEG_INFINITY {
            return Err(NumericError::Domain(
                "sharpen: all-zero weighting has no distribution".into(),
            ));
        }
        let lse = mx + dst.iter().map(|&l| (l - mx).exp()).sum::<f64>().ln();
        for d in dst.iter_mut() {
            *d = (*d - lse).exp();
        }
    }
    Ok(Tensor::from_parts(a.shape().to_vec(), out))
}

pub fn sharpen_backward(a: &Tensor, gamma: &Tensor, y: &Tensor, g: &Tensor) -> (Tensor, Tensor) {
    let m = *a.shape().last().unwrap();
    let mut da = vec![0.0; a.numel()];
    let mut dgamma = vec![0.0; gamma.numel()];
    for (r, ((da_row, row), (yr, gr))) in da
        .chunks_mut(m)
        .zip(a.data().chunks(m))
        .zip(y.data().chunks(m).zip(g.data().chunks(m)))
        .enumerate()
    {
        let gm = gamma.data()[r];
        let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
        let mut dg = 0.0;
        for j in 0..m {
            // gradient w.r.t. the logit gamma·ln a_j
            let v = yr[j] * (gr[j] - dot);
            if row[j] > 0.0 && v != 0.0 {
                da_row[j] = v * gm / row[j];
                dg += v * row[j].ln();
            }
        }
        dgamma[r] = dg;
    }
    (
        Tensor::from_parts(a.shape().to_vec(), da),
        Tensor::from_parts(gamma.shape().to_vec(), dgamma),
    )
}

// ---------------------------------------------------------------------------
// complex elementwise (interleaved trailing axis of extent 2)

pub fn cexp(z: &Tensor) -> Tensor {
    let mut out = vec![0.0; z.numel()];
    for (o, c) in out.chunks_mut(2).zip(z.data().chunks(2)) {
        let mag = c[0].exp();
        let (s, co) = c[1].sin_cos();
        o[0] = mag * co;
        o[1] = mag * s;
    }
    Tensor::from_parts(z.shape().to_vec(), out)
}

pub fn cexp_backward(w: &Tensor, g: &Tensor) -> Tensor {
    let mut out = vec![0.0; w.numel()];
    for ((o, wc), gc) in out.chunks_mut(2).zip(w.data().chunks(2)).zip(g.data().chunks(2)) {
        // (gu + i gv) · conj(w)
        o[0] = gc[0] * wc[0] + gc[1] * wc[1];
        o[1] = gc[1] * wc[0] - gc[0] * wc[1];
    }
    Tensor::from_parts(w.shape().to_vec(), out)
}

/// Approximate complex logarithm: `ln(z + ε·z/|z|)` for `z ≠ 0`, `ln ε` at 0.
pub fn approx_log_scalar(re: f64, im: f64, eps: f64) -> (f64, f64) {
    let r = re.hypot(im);
    if r == 0.0 {
        (eps.ln(), 0.0)
    } else {
        (r.ln() + (eps / r).ln_1p(), im.atan2(re))
    }
}

pub fn approx_log(z: &Tensor, eps: f64) -> Tensor {
    let mut out = vec![0.0; z.numel()];
    for (o, c) in out.chunks_mut(2).zip(z.data().chunks(2)) {
        let (u, v) = approx_log_scalar(c[0], c[1], eps);
        o[0] = u;
        o[1] = v;
    }
    Tensor::from_parts(z.shape().to_vec(), out)
}

pub fn approx_log_backward(z: &Tensor, g: &Tensor, eps: f64) -> Tensor {
    let mut out = vec![0.0; z.numel()];
    for ((o, c), gc) in out.chunks_mut(2).zip(z.data().chunks(2)).zip(g.data().chunks(2)) {
        let (x, y) = (c[0], c[1]);
        let r2 = x * x + y * y;
        if r2 == 0.0 {
            continue;
        }
        let r = r2.sqrt();
        let mag = 1.0 / (r * (r + eps));
        o[0] = gc[0] * x * mag - gc[1] * y / r2;
        o[1] = gc[0] * y * mag + gc[1] * x / r2;
    }
    Tensor::from_parts(z.shape().to_vec(), out)
}

// ---------------------------------------------------------------------------
// loss

/// Masked mean cross-entropy over rows of `logits [N, V]`. The mean divides
/// by the mask total; an all-zero mask yields zero loss.
pub fn cross_entropy(logits: &Tensor, targets: &[usize], mask: &[f64]) -> Result<f64> {
    let (n, v) = ce_dims(logits, targets, mask)?;
    let denom = ce_denominator(mask);
    let mut total = 0.0;
    for r in 0..n {
        if mask[r] == 0.0 {
            continue;
        }
        let row = &logits.data()[r * v..(r + 1) * v];
        let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + row.iter().map(|&x| (x - mx).exp()).sum::<f64>().ln();
        total += mask[r] * (lse - row[targets[r]]);
    }
    Ok(total / denom)
}

pub fn cross_entropy_backward(logits: &Tensor, targets: &[usize], mask: &[f64], g: f64) -> Tensor {
    let v = logits.shape()[1];
    let denom = ce_denominator(mask);
    let mut out = vec![0.0; logits.numel()];
    for (r, (dst, row)) in out.chunks_mut(v).zip(logits.data().chunks(v)).enumerate() {
        if mask[r] == 0.0 {
            continue;
        }
        let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&x| (x - mx).exp()).sum();
        let scale = g * mask[r] / denom;
        for (j, d) in dst.iter_mut().enumerate() {
            let p = (row[j] - mx).exp() / sum;
            *d = scale * (p - if j == targets[r] { 1.0 } else { 0.0 });
        }
    }
    Tensor::from_parts(logits.shape().to_vec(), out)
}

fn ce_denominator(mask: &[f64]) -> f64 {
    let s: f64 = mask.iter().sum();
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

fn ce_dims(logits: &Tensor, targets: &[usize], mask: &[f64]) -> Result<(usize, usize)> {
    if logits.rank() != 2 || targets.len() != logits.shape()[0] || mask.len() != targets.len() {
        return Err(NumericError::ShapeMismatch {
            op: "cross_entropy",
            left: logits.shape().to_vec(),
            right: vec![targets.len(), mask.len()],
        });
    }
    let v = logits.shape()[1];
    if let Some(&t) = targets.iter().find(|&&t| t >= v) {
        return Err(NumericError::Domain(format!("cross_entropy: target {t} >= vocab {v}")));
    }
    Ok((logits.shape()[0], v))
}
