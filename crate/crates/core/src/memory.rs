//! Non-negative cell memory written by convex overwrites.
//!
//! A write with weighting `a` replaces each cell by
//! `(1 − a[i])·M[i] + a[i]·g(u)`. Because `g` is strictly positive and the
//! update is convex, memory stays non-negative and the whole write history
//! is a positive first-order recurrence that a log-space scan evaluates for
//! all steps at once.

use std::ops::Range;

use thiserror::Error;

use crate::addressing::AddressWeights;
use crate::numeric::kernels::g_nonlin;
use crate::numeric::{Graph, NumericError, Tensor, Var};
use crate::scan::linear_recurrence_log_graph;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MemoryError {
    #[error("{heads} heads cannot evenly partition cell width {width}")]
    Partition { width: usize, heads: usize },
    #[error("update contains a non-finite value at step {step}")]
    NonFiniteUpdate { step: usize },
    #[error("{what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

pub type Result<T> = std::result::Result<T, MemoryError>;

/// Cells used during training for sequences up to `max_len`.
pub fn train_memory_size(max_len: usize) -> usize {
    2 * max_len + 16
}

/// Default cell count at evaluation time.
pub const EVAL_MEMORY_SIZE: usize = 256;

/// `m × n` memory, row `i` is cell `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryMatrix {
    cells: Tensor,
}

impl MemoryMatrix {
    pub fn zeros(m: usize, n: usize) -> Self {
        MemoryMatrix {
            cells: Tensor::zeros(&[m, n]),
        }
    }

    pub fn from_tensor(cells: Tensor) -> Result<Self> {
        if cells.rank() != 2 {
            return Err(MemoryError::Shape {
                what: "memory rank",
                expected: 2,
                got: cells.rank(),
            });
        }
        Ok(MemoryMatrix { cells })
    }

    pub fn rows(&self) -> usize {
        self.cells.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.cells.shape()[1]
    }

    pub fn cell(&self, i: usize) -> &[f64] {
        let n = self.width();
        &self.cells.data()[i * n..(i + 1) * n]
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.cells
    }

    pub fn into_tensor(self) -> Tensor {
        self.cells
    }
}

/// Elementwise positive nonlinearity: `x + 0.5` for `x ≥ 0`, `σ(x)` below.
pub fn g(x: &Tensor) -> Tensor {
    x.map(g_nonlin)
}

/// Contiguous equal column ranges, one per write head (0-based, half-open).
pub fn partition_cells(n: usize, heads: usize) -> Result<Vec<Range<usize>>> {
    if heads == 0 || !n.is_multiple_of(heads) {
        return Err(MemoryError::Partition { width: n, heads });
    }
    let k = n / heads;
    Ok((0..heads).map(|h| h * k..(h + 1) * k).collect())
}

/// One write step: `M[i] = (1 − a[i])·M_prev[i] + a[i]·g(u)` on every column.
pub fn write_sequential(prev: &MemoryMatrix, a_prev: &AddressWeights, u: &[f64]) -> Result<MemoryMatrix> {
    write_sequential_heads(prev, std::slice::from_ref(a_prev), &[u.to_vec()])
}

/// Multi-head write step: head `h` uses `addrs[h]` and writes `g(updates[h])`
/// into its own column range.
pub fn write_sequential_heads(
    prev: &MemoryMatrix,
    addrs: &[AddressWeights],
    updates: &[Vec<f64>],
) -> Result<MemoryMatrix> {
    let (m, n) = (prev.rows(), prev.width());
    let ranges = partition_cells(n, addrs.len())?;
    let mut out = prev.cells.clone();
    let data = out.data_mut();
    for ((a, u), cols) in addrs.iter().zip(updates).zip(ranges) {
        check_len("address length", m, a.len())?;
        check_len("update width", cols.len(), u.len())?;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(MemoryError::NonFiniteUpdate { step: 0 });
        }
        for (i, &w) in a.as_slice().iter().enumerate() {
            for (j, &uj) in cols.clone().zip(u) {
                let cell = &mut data[i * n + j];
                *cell = (1.0 - w) * *cell + w * g_nonlin(uj);
            }
        }
    }
    Ok(MemoryMatrix { cells: out })
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(MemoryError::Shape { what, expected, got });
    }
    Ok(())
}

/// Log-space scan of writes on a tape.
///
/// `addr: [B, T, H, m]` are the write weightings in effect at each step,
/// `u: [B, T, n]` the raw updates with head `h` owning columns
/// `h·n/H .. (h+1)·n/H`. `init: [B, m, n]` is an optional non-negative
/// starting memory (zeros when absent). Returns `M₁ … M_T` as `[B, T, m, n]`.
pub fn write_parallel_graph(
    g: &mut Graph,
    addr: Var,
    u: Var,
    init: Option<Var>,
    eps: f64,
) -> Result<Var> {
    let ashape = g.shape(addr).to_vec();
    let ushape = g.shape(u).to_vec();
    if ashape.len() != 4 || ushape.len() != 3 || ashape[..2] != ushape[..2] {
        return Err(NumericError::ShapeMismatch {
            op: "memory write",
            left: ashape,
            right: ushape,
        }
        .into());
    }
    let (b, t, h, m) = (ashape[0], ashape[1], ashape[2], ashape[3]);
    let n = ushape[2];
    let k = partition_cells(n, h)?[0].len();

    let keep = g.one_minus(addr);
    let keep = g.clamp(keep, eps, 1.0 - eps);
    let log_keep = g.log(keep)?;
    let log_keep = g.permute(log_keep, &[0, 1, 3, 2])?;
    let log_keep = g.reshape(log_keep, &[b, t, m, h, 1])?;
    let log_write = g.log1mexp(log_keep);
    let log_content = g.log_g(u);
    let log_content = g.reshape(log_content, &[b, t, 1, h, k])?;
    let beta = g.add(log_write, log_content)?;
    let log_v0 = match init {
        None => None,
        Some(m0) => {
            let l = g.log(m0)?;
            Some(g.reshape(l, &[b, 1, m, h, k])?)
        }
    };
    let mem = linear_recurrence_log_graph(g, log_keep, beta, log_v0, 1)?;
    Ok(g.reshape(mem, &[b, t, m, n])?)
}

/// All memories `M₁ … M_T` from weightings `a₀ … a_{T−1}` and updates
/// `u₁ … u_T` for a single head owning every column, starting from zeros.
pub fn memory_write_parallel(
    addrs: &[AddressWeights],
    updates: &[Vec<f64>],
    eps: f64,
) -> Result<Vec<MemoryMatrix>> {
    check_len("update count", addrs.len(), updates.len())?;
    let t = addrs.len();
    if t == 0 {
        return Ok(Vec::new());
    }
    let m = addrs[0].len();
    let n = updates[0].len();
    let mut a = Vec::with_capacity(t * m);
    let mut u = Vec::with_capacity(t * n);
    for (step, (ai, ui)) in addrs.iter().zip(updates).enumerate() {
        check_len("address length", m, ai.len())?;
        check_len("update width", n, ui.len())?;
        if ui.iter().any(|v| !v.is_finite()) {
            return Err(MemoryError::NonFiniteUpdate { step });
        }
        a.extend_from_slice(ai.as_slice());
        u.extend_from_slice(ui);
    }
    let mut g = Graph::no_grad();
    let av = g.constant(Tensor::new(&[1, t, 1, m], a)?);
    let uv = g.constant(Tensor::new(&[1, t, n], u)?);
    let mem = write_parallel_graph(&mut g, av, uv, None, eps)?;
    Ok(g.value(mem)
        .data()
        .chunks(m * n)
        .map(|c| MemoryMatrix {
            cells: Tensor::from_parts(vec![m, n], c.to_vec()),
        })
        .collect())
}

/// Mixed view `M̃[i] = W·M[i]` of every cell.
pub fn mix(mem: &MemoryMatrix, w: &Tensor) -> Result<MemoryMatrix> {
    let n = mem.width();
    if w.shape() != [n, n] {
        return Err(NumericError::ShapeMismatch {
            op: "mix",
            left: mem.cells.shape().to_vec(),
            right: w.shape().to_vec(),
        }
        .into());
    }
    let cells = crate::numeric::kernels::linear(&mem.cells, w, None)?;
    Ok(MemoryMatrix { cells })
}

/// `r = Σᵢ a[i]·M[i]`.
pub fn read(mem: &MemoryMatrix, a: &AddressWeights) -> Result<Vec<f64>> {
    check_len("address length", mem.rows(), a.len())?;
    let n = mem.width();
    let mut r = vec![0.0; n];
    for (i, &w) in a.as_slice().iter().enumerate() {
        for (rj, mij) in r.iter_mut().zip(mem.cell(i)) {
            *rj += w * mij;
        }
    }
    Ok(r)
}

/// Reads on a tape through the mixing projection.
///
/// `addr: [B, T, H, m]`, `mem: [B, T, m, n]`, `mixing: [n, n]`; returns
/// `[B, T, H·n]`, head-major. Reading before mixing gives the same result as
/// mixing every cell first, at a fraction of the cost.
pub fn read_mixed_graph(g: &mut Graph, addr: Var, mem: Var, mixing: Var) -> Result<Var> {
    let r = g.bmm(addr, mem)?;
    let r = g.linear(r, mixing, None)?;
    let s = g.shape(r).to_vec();
    Ok(g.reshape(r, &[s[0], s[1], s[2] * s[3]])?)
}
