use rand::Rng;

use super::Result;
use crate::numeric::{Bound, Graph, ParamId, ParamSet, Var};

const RMS_EPS: f64 = 1e-6;

/// `x / rms(x) ⊙ scale` over the last axis.
#[derive(Debug, Clone)]
pub struct RmsNorm {
    scale: ParamId,
}

impl RmsNorm {
    pub fn new(params: &mut ParamSet, name: &str, d: usize) -> Self {
        RmsNorm {
            scale: params.constant(name, &[d], 1.0),
        }
    }

    pub fn apply(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let axis = g.shape(x).len() - 1;
        let sq = g.square(x);
        let ms = g.mean(sq, axis)?;
        let ms = g.add_scalar(ms, RMS_EPS);
        let rms = g.sqrt(ms);
        let y = g.div(x, rms)?;
        Ok(g.mul(y, p[self.scale])?)
    }
}

/// Two-layer position-wise network with GELU in between.
#[derive(Debug, Clone)]
pub struct FeedForward {
    w_in: ParamId,
    b_in: ParamId,
    w_out: ParamId,
    b_out: ParamId,
}

impl FeedForward {
    pub fn new(params: &mut ParamSet, prefix: &str, d: usize, mult: usize, rng: &mut impl Rng) -> Self {
        let hidden = d * mult;
        FeedForward {
            w_in: params.uniform(format!("{prefix}.w_in"), &[hidden, d], d, rng),
            b_in: params.uniform(format!("{prefix}.b_in"), &[hidden], d, rng),
            w_out: params.uniform(format!("{prefix}.w_out"), &[d, hidden], hidden, rng),
            b_out: params.uniform(format!("{prefix}.b_out"), &[d], hidden, rng),
        }
    }

    pub fn apply(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let h = g.linear(x, p[self.w_in], Some(p[self.b_in]))?;
        let h = g.gelu(h);
        Ok(g.linear(h, p[self.w_out], Some(p[self.b_out]))?)
    }
}
