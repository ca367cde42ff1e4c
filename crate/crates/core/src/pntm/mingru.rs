use rand::Rng;

use super::Result;
use crate::numeric::{Bound, Graph, ParamId, ParamSet, Var};
use crate::scan::linear_recurrence_log_graph;

/// Minimal gated recurrence
/// `h_t = (1 − z_t)⊙h_{t−1} + z_t⊙h̃_t` with `z_t = σ(W_z x_t)`,
/// `h̃_t = g(W_h x_t)`, followed by a projection back to the model width.
///
/// Gates and candidates depend only on `x_t`, so the recurrence is a
/// positive first-order scan in log space.
#[derive(Debug, Clone)]
pub struct MinGru {
    pub d: usize,
    pub hidden: usize,
    w_gate: ParamId,
    w_cand: ParamId,
    w_out: ParamId,
}

impl MinGru {
    pub fn new(params: &mut ParamSet, prefix: &str, d: usize, expansion: usize, rng: &mut impl Rng) -> Self {
        let hidden = d * expansion;
        MinGru {
            d,
            hidden,
            w_gate: params.uniform(format!("{prefix}.w_gate"), &[hidden, d], d, rng),
            w_cand: params.uniform(format!("{prefix}.w_cand"), &[hidden, d], d, rng),
            w_out: params.uniform(format!("{prefix}.w_out"), &[d, hidden], hidden, rng),
        }
    }

    /// `xs: [B, T, d]` to `([B, T, d], h_T: [B, hidden])`. `h0` defaults to
    /// zeros and must be non-negative.
    pub fn forward_parallel(&self, g: &mut Graph, p: &Bound, xs: Var, h0: Option<Var>) -> Result<(Var, Var)> {
        let k = g.linear(xs, p[self.w_gate], None)?;
        let c = g.linear(xs, p[self.w_cand], None)?;
        let sp = g.softplus(k);
        let log_keep = g.neg(sp);
        let nk = g.neg(k);
        let sp_neg = g.softplus(nk);
        let log_z = g.neg(sp_neg);
        let log_c = g.log_g(c);
        let beta = g.add(log_z, log_c)?;
        let log_h0 = match h0 {
            Some(h) => Some(g.log(h)?),
            None => None,
        };
        let hs = linear_recurrence_log_graph(g, log_keep, beta, log_h0, 1)?;
        let y = g.linear(hs, p[self.w_out], None)?;
        let s = g.shape(hs).to_vec();
        let last = g.narrow(hs, 1, s[1] - 1, 1)?;
        let last = g.reshape(last, &[s[0], s[2]])?;
        Ok((y, last))
    }

    /// One step on `x: [B, d]` with state `h: [B, hidden]`.
    pub fn step(&self, g: &mut Graph, p: &Bound, x: Var, h: Var) -> Result<(Var, Var)> {
        let k = g.linear(x, p[self.w_gate], None)?;
        let z = g.sigmoid(k);
        let c = g.linear(x, p[self.w_cand], None)?;
        let c = g.g_nonlin(c);
        let keep = g.one_minus(z);
        let kept = g.mul(keep, h)?;
        let new = g.mul(z, c)?;
        let h = g.add(kept, new)?;
        let y = g.linear(h, p[self.w_out], None)?;
        Ok((y, h))
    }
}
