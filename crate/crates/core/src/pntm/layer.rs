use rand::Rng;

use super::{PntmConfig, Result};
use crate::addressing::{conv_shift_graph, stabilize_rows, AddressWeights};
use crate::memory::{read_mixed_graph, write_parallel_graph};
use crate::numeric::{Bound, Graph, ParamId, ParamSet, Tensor, Var};

/// Memory layer whose head controls depend only on the current input.
///
/// Heads come in read/write pairs. Write head `h` owns the columns
/// `h·n/H .. (h+1)·n/H`; read head `h` reads full cells through the shared
/// mixing projection.
#[derive(Debug, Clone)]
pub struct PntmLayer {
    pub cfg: PntmConfig,
    w_read: ParamId,
    w_write: ParamId,
    w_update: ParamId,
    w_mix: ParamId,
    w_out: ParamId,
}

/// Per-step head controls.
#[derive(Debug, Clone, Copy)]
pub struct Control {
    /// Read shifts `[..., H, 3]`.
    pub read: Var,
    /// Write shifts `[..., H, 3]`.
    pub write: Var,
    /// Raw updates `[..., n]`.
    pub update: Var,
}

/// Recurrent state between steps or chunks.
#[derive(Debug, Clone, PartialEq)]
pub struct PntmState {
    /// `[B, m, n]`, unmixed.
    pub mem: Tensor,
    /// `[B, H, m]`.
    pub read: Tensor,
    /// `[B, H, m]`.
    pub write: Tensor,
}

/// Result of one recurrent step.
#[derive(Debug, Clone, Copy)]
pub struct StepOut {
    /// `[B, d]`.
    pub y: Var,
    pub state: PntmStateVars,
    /// Mixed read vectors `[B, H, n]`.
    pub reads: Var,
    /// Written content `g(u)`, `[B, n]`.
    pub content: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct PntmStateVars {
    pub mem: Var,
    pub read: Var,
    pub write: Var,
}

impl PntmState {
    /// Zero memory, every head on the first cell.
    pub fn fresh(batch: usize, m: usize, n: usize, heads: usize) -> Self {
        let e1 = AddressWeights::initial(m).into_vec();
        let addr: Vec<f64> = std::iter::repeat_n(e1, batch * heads).flatten().collect();
        let addr = Tensor::new(&[batch, heads, m], addr).expect("consistent shape");
        PntmState {
            mem: Tensor::zeros(&[batch, m, n]),
            read: addr.clone(),
            write: addr,
        }
    }

    pub fn constants(&self, g: &mut Graph) -> PntmStateVars {
        PntmStateVars {
            mem: g.constant(self.mem.clone()),
            read: g.constant(self.read.clone()),
            write: g.constant(self.write.clone()),
        }
    }

    pub fn from_graph(g: &Graph, v: &PntmStateVars) -> Self {
        PntmState {
            mem: g.value(v.mem).clone(),
            read: g.value(v.read).clone(),
            write: g.value(v.write).clone(),
        }
    }
}

impl PntmLayer {
    pub fn new(params: &mut ParamSet, prefix: &str, cfg: PntmConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let (d, n, h) = (cfg.d, cfg.n, cfg.heads);
        Ok(PntmLayer {
            w_read: params.uniform(format!("{prefix}.w_read"), &[h * 3, d], d, rng),
            w_write: params.uniform(format!("{prefix}.w_write"), &[h * 3, d], d, rng),
            w_update: params.uniform(format!("{prefix}.w_update"), &[n, d], d, rng),
            w_mix: params.uniform(format!("{prefix}.w_mix"), &[n, n], n, rng),
            w_out: params.uniform(format!("{prefix}.w_out"), &[d, h * n], h * n, rng),
            cfg,
        })
    }

    pub fn param_ids(&self) -> [ParamId; 5] {
        [self.w_read, self.w_write, self.w_update, self.w_mix, self.w_out]
    }

    /// Shift vectors and updates from `x: [..., d]`; no biases, no state.
    pub fn control(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Control> {
        let lead = g.shape(x)[..g.shape(x).len() - 1].to_vec();
        let mut shift_shape = lead;
        shift_shape.extend([self.cfg.heads, 3]);
        let axis = shift_shape.len() - 1;
        let mut shifts = |w: ParamId| -> Result<Var> {
            let logits = g.linear(x, p[w], None)?;
            let logits = g.reshape(logits, &shift_shape)?;
            Ok(g.softmax(logits, axis)?)
        };
        let read = shifts(self.w_read)?;
        let write = shifts(self.w_write)?;
        let update = g.linear(x, p[self.w_update], None)?;
        Ok(Control { read, write, update })
    }

    /// Whole-sequence evaluation of `xs: [B, T, d]` with scans over time.
    /// `carry` continues from an earlier chunk; `None` starts fresh.
    pub fn forward_parallel(
        &self,
        g: &mut Graph,
        p: &Bound,
        xs: Var,
        m: usize,
        carry: Option<&PntmStateVars>,
    ) -> Result<(Var, PntmStateVars)> {
        let eps = self.cfg.epsilon;
        let c = self.control(g, p, xs)?;
        let head_major = [0, 2, 1, 3];
        let rs = g.permute(c.read, &head_major)?;
        let ws = g.permute(c.write, &head_major)?;
        let (ar, next_read) = conv_shift_graph(g, rs, carry.map(|s| s.read), m, eps)?;
        let (aw, next_write) = conv_shift_graph(g, ws, carry.map(|s| s.write), m, eps)?;
        let ar = g.permute(ar, &head_major)?;
        let aw = g.permute(aw, &head_major)?;
        let mems = write_parallel_graph(g, aw, c.update, carry.map(|s| s.mem), eps)?;
        let r = read_mixed_graph(g, ar, mems, p[self.w_mix])?;
        let y = g.linear(r, p[self.w_out], None)?;
        let s = g.shape(mems).to_vec();
        let last = g.narrow(mems, 1, s[1] - 1, 1)?;
        let mem = g.reshape(last, &[s[0], s[2], s[3]])?;
        Ok((
            y,
            PntmStateVars {
                mem,
                read: next_read,
                write: next_write,
            },
        ))
    }

    /// One recurrent step on `x: [B, d]`: write and read with the previous
    /// addresses, emit the output, then advance the addresses. With `tau`
    /// set, shift strengths below it are dropped first; that path is for
    /// inference and does not propagate gradients into the shifts.
    pub fn step(
        &self,
        g: &mut Graph,
        p: &Bound,
        state: &PntmStateVars,
        x: Var,
        tau: Option<f64>,
    ) -> Result<StepOut> {
        let (b, h, n) = (g.shape(x)[0], self.cfg.heads, self.cfg.n);
        let m = g.shape(state.mem)[1];
        let k = n / h;
        let c = self.control(g, p, x)?;

        let aw = g.permute(state.write, &[0, 2, 1])?;
        let aw = g.reshape(aw, &[b, m, h, 1])?;
        let keep = g.one_minus(aw);
        let mem = g.reshape(state.mem, &[b, m, h, k])?;
        let kept = g.mul(keep, mem)?;
        let content = g.g_nonlin(c.update);
        let content4 = g.reshape(content, &[b, 1, h, k])?;
        let written = g.mul(aw, content4)?;
        let mem = g.add(kept, written)?;
        let mem = g.reshape(mem, &[b, m, n])?;

        let r = g.bmm(state.read, mem)?;
        let reads = g.linear(r, p[self.w_mix], None)?;
        let r = g.reshape(reads, &[b, h * n])?;
        let y = g.linear(r, p[self.w_out], None)?;

        let (rs, ws) = match tau {
            Some(tau) => {
                let rs = stabilize_rows(g.value(c.read), tau)?;
                let ws = stabilize_rows(g.value(c.write), tau)?;
                (g.constant(rs), g.constant(ws))
            }
            None => (c.read, c.write),
        };
        let read = g.shift3(state.read, rs)?;
        let write = g.shift3(state.write, ws)?;
        Ok(StepOut {
            y,
            state: PntmStateVars { mem, read, write },
            reads,
            content,
        })
    }

    /// Folds [`PntmLayer::step`] over `xs: [B, T, d]` on one tape.
    pub fn forward_sequential(
        &self,
        g: &mut Graph,
        p: &Bound,
        xs: Var,
        state: PntmStateVars,
        tau: Option<f64>,
    ) -> Result<(Var, PntmStateVars)> {
        let (b, t, d) = {
            let s = g.shape(xs);
            (s[0], s[1], s[2])
        };
        let mut state = state;
        let mut ys = Vec::with_capacity(t);
        for i in 0..t {
            let x = g.narrow(xs, 1, i, 1)?;
            let x = g.reshape(x, &[b, d])?;
            let out = self.step(g, p, &state, x, tau)?;
            ys.push(g.reshape(out.y, &[b, 1, d])?);
            state = out.state;
        }
        Ok((g.concat(&ys, 1)?, state))
    }

    /// Parameters of the read and write shift projections, each `[3H, d]`
    /// with rows ordered head-major as left, stay, right.
    pub fn shift_params(&self) -> (ParamId, ParamId) {
        (self.w_read, self.w_write)
    }

    /// No-gradient parallel evaluation in time chunks of at most `chunk`
    /// steps, carrying state between chunks so peak memory stays bounded.
    pub fn eval_chunked(&self, params: &ParamSet, xs: &Tensor, m: usize, chunk: usize) -> Result<Tensor> {
        let (b, t, d) = (xs.shape()[0], xs.shape()[1], xs.shape()[2]);
        let chunk = chunk.max(1);
        let mut out = Vec::with_capacity(xs.numel());
        let mut carry: Option<PntmState> = None;
        let mut start = 0;
        while start < t {
            let len = chunk.min(t - start);
            let mut g = Graph::no_grad();
            let p = params.bind(&mut g);
            let x = g.constant(crate::numeric::kernels::narrow(xs, 1, start, len)?);
            let cv = carry.as_ref().map(|s| s.constants(&mut g));
            let (y, next) = self.forward_parallel(&mut g, &p, x, m, cv.as_ref())?;
            out.push(g.value(y).clone());
            carry = Some(PntmState::from_graph(&g, &next));
            start += len;
        }
        let parts: Vec<&Tensor> = out.iter().collect();
        let y = crate::numeric::kernels::concat(&parts, 1)?;
        debug_assert_eq!(y.shape(), [b, t, d]);
        Ok(y)
    }
}
