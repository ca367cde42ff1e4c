//! Recurrent memory baseline with an LSTM controller and content plus
//! location addressing.
//!
//! Every head computes content weights from cosine similarity, interpolates
//! with its previous weights, applies a three-tap shift and sharpens in log
//! space. Write heads address the previous memory, erase, then add; read
//! heads then address and read the updated memory in the same step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addressing::AddressWeights;
use crate::memory::MemoryMatrix;
use crate::numeric::{Bound, Graph, NumericError, ParamId, ParamSet, Tensor, Var};

/// Fill value of every memory entry at reset.
pub const MEMORY_FILL: f64 = 1e-6;
/// Floor on the cosine-similarity denominator.
pub const COSINE_FLOOR: f64 = 1e-8;
const EMBED_STD: f64 = 0.02;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NtmError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

pub type Result<T> = std::result::Result<T, NtmError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NtmConfig {
    /// Input width.
    pub input: usize,
    /// Controller width.
    pub controller: usize,
    /// Output width.
    pub output: usize,
    /// Cell width.
    pub n: usize,
    /// Memory rows.
    pub m: usize,
    /// Number of read heads, and of write heads.
    pub heads: usize,
}

impl NtmConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.input, self.controller, self.output, self.n, self.heads].contains(&0) {
            return Err(NtmError::Config("widths and head count must be positive".into()));
        }
        if self.m < 3 {
            return Err(NtmError::Config(format!("memory needs at least 3 rows, got {}", self.m)));
        }
        Ok(())
    }

    fn read_width(&self) -> usize {
        self.n + 6
    }

    fn write_width(&self) -> usize {
        3 * self.n + 6
    }
}

/// Squashed controls of a group of heads, each `[B, H, ·]`.
#[derive(Debug, Clone, Copy)]
pub struct HeadControls {
    /// Key in `(−1, 1)`, `[B, H, n]`.
    pub key: Var,
    /// Key strength `> 0`, `[B, H, 1]`.
    pub beta: Var,
    /// Interpolation gate in `(0, 1)`, `[B, H, 1]`.
    pub gate: Var,
    /// Shift strengths, `[B, H, 3]`.
    pub shift: Var,
    /// Sharpening exponent `≥ 1`, `[B, H, 1]`.
    pub gamma: Var,
    /// Erase vector in `(0, 1)` (write heads only), `[B, H, n]`.
    pub erase: Option<Var>,
    /// Add vector in `(−1, 1)` (write heads only), `[B, H, n]`.
    pub add: Option<Var>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NtmState {
    /// `[B, c]`.
    pub h: Tensor,
    /// LSTM cell `[B, c]`.
    pub cell: Tensor,
    /// `[B, m, n]`.
    pub mem: Tensor,
    /// `[B, H, m]`.
    pub read: Tensor,
    /// `[B, H, m]`.
    pub write: Tensor,
    /// Previous reads `[B, H·n]`.
    pub r: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct NtmStateVars {
    pub h: Var,
    pub cell: Var,
    pub mem: Var,
    pub read: Var,
    pub write: Var,
    pub r: Var,
}

impl NtmState {
    pub fn fresh(batch: usize, cfg: &NtmConfig, m: usize) -> Self {
        let e1 = AddressWeights::initial(m).into_vec();
        let addr: Vec<f64> = std::iter::repeat_n(e1, batch * cfg.heads).flatten().collect();
        let addr = Tensor::new(&[batch, cfg.heads, m], addr).expect("consistent shape");
        NtmState {
            h: Tensor::zeros(&[batch, cfg.controller]),
            cell: Tensor::zeros(&[batch, cfg.controller]),
            mem: Tensor::full(&[batch, m, cfg.n], MEMORY_FILL),
            read: addr.clone(),
            write: addr,
            r: Tensor::zeros(&[batch, cfg.heads * cfg.n]),
        }
    }

    pub fn constants(&self, g: &mut Graph) -> NtmStateVars {
        NtmStateVars {
            h: g.constant(self.h.clone()),
            cell: g.constant(self.cell.clone()),
            mem: g.constant(self.mem.clone()),
            read: g.constant(self.read.clone()),
            write: g.constant(self.write.clone()),
            r: g.constant(self.r.clone()),
        }
    }

    pub fn from_graph(g: &Graph, v: &NtmStateVars) -> Self {
        NtmState {
            h: g.value(v.h).clone(),
            cell: g.value(v.cell).clone(),
            mem: g.value(v.mem).clone(),
            read: g.value(v.read).clone(),
            write: g.value(v.write).clone(),
            r: g.value(v.r).clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// addressing stages on a tape

/// `softmax_i(β · cos(k, M[i]))`; `key: [B, H, n]`, `beta: [B, H, 1]`,
/// `mem: [B, m, n]`, result `[B, H, m]`.
pub fn content_address_graph(g: &mut Graph, key: Var, beta: Var, mem: Var) -> Result<Var> {
    let mem_t = g.permute(mem, &[0, 2, 1])?;
    let dots = g.bmm(key, mem_t)?;
    let ksq = g.square(key);
    let ksum = g.sum(ksq, 2)?;
    let knorm = g.sqrt(ksum);
    let msq = g.square(mem);
    let msum = g.sum(msq, 2)?;
    let mnorm = g.sqrt(msum);
    let mnorm = g.permute(mnorm, &[0, 2, 1])?;
    let denom = g.mul(knorm, mnorm)?;
    let denom = g.clamp(denom, COSINE_FLOOR, f64::INFINITY);
    let cos = g.div(dots, denom)?;
    let logits = g.mul(beta, cos)?;
    Ok(g.softmax(logits, 2)?)
}

/// `(1 − gate)·prev + gate·content`.
pub fn interpolate_graph(g: &mut Graph, prev: Var, content: Var, gate: Var) -> Result<Var> {
    let diff = g.sub(content, prev)?;
    let step = g.mul(gate, diff)?;
    Ok(g.add(prev, step)?)
}

/// Full addressing pipeline for a group of heads.
pub fn address_graph(g: &mut Graph, c: &HeadControls, prev: Var, mem: Var) -> Result<Var> {
    let content = content_address_graph(g, c.key, c.beta, mem)?;
    let mixed = interpolate_graph(g, prev, content, c.gate)?;
    let shifted = g.shift3(mixed, c.shift)?;
    Ok(g.sharpen(shifted, c.gamma)?)
}

/// `M ⊙ Πₕ(1 − aₕ dₕᵀ) + Σₕ aₕ uₕᵀ`; `addr: [B, H, m]`,
/// `erase`/`add`: `[B, H, n]`, `mem: [B, m, n]`.
pub fn write_graph(g: &mut Graph, mem: Var, addr: Var, erase: Var, add: Var) -> Result<Var> {
    let s = g.shape(addr).to_vec();
    let (b, h, m) = (s[0], s[1], s[2]);
    let n = g.shape(mem)[2];
    let mut out = mem;
    for head in 0..h {
        let a = g.narrow(addr, 1, head, 1)?;
        let a = g.reshape(a, &[b, m, 1])?;
        let d = g.narrow(erase, 1, head, 1)?;
        let d = g.reshape(d, &[b, 1, n])?;
        let ad = g.mul(a, d)?;
        let keep = g.one_minus(ad);
        out = g.mul(out, keep)?;
    }
    let a_t = g.permute(addr, &[0, 2, 1])?;
    let adds = g.bmm(a_t, add)?;
    Ok(g.add(out, adds)?)
}

// ---------------------------------------------------------------------------
// single-head helpers on plain values

fn row_tensor(a: &[f64]) -> Tensor {
    Tensor::new(&[1, 1, a.len()], a.to_vec()).expect("non-empty weighting")
}

/// Content weights of one head.
pub fn content_address(key: &[f64], beta: f64, mem: &MemoryMatrix) -> Result<AddressWeights> {
    let mut g = Graph::no_grad();
    let k = g.constant(row_tensor(key));
    let b = g.constant(Tensor::full(&[1, 1, 1], beta));
    let m = g.constant(mem.as_tensor().reshape(&[1, mem.rows(), mem.width()])?);
    let a = content_address_graph(&mut g, k, b, m)?;
    Ok(AddressWeights::from_vec(g.value(a).to_vec()))
}

pub fn interpolate(prev: &AddressWeights, content: &AddressWeights, gate: f64) -> AddressWeights {
    let w = prev
        .as_slice()
        .iter()
        .zip(content.as_slice())
        .map(|(p, c)| p + gate * (c - p))
        .collect();
    AddressWeights::from_vec(w)
}

/// `a^γ / Σ a^γ` computed through log-sum-exp; an all-zero weighting is an
/// error.
pub fn sharpen(a: &AddressWeights, gamma: f64) -> Result<AddressWeights> {
    let out = crate::numeric::kernels::sharpen(&row_tensor(a.as_slice()), &Tensor::scalar(gamma))?;
    Ok(AddressWeights::from_vec(out.into_vec()))
}

/// Erase and add vectors of one write head together with its weighting.
#[derive(Debug, Clone)]
pub struct WriteHead {
    pub addr: AddressWeights,
    pub erase: Vec<f64>,
    pub add: Vec<f64>,
}

/// All erasures first, then all additions.
pub fn ntm_write(mem: &MemoryMatrix, heads: &[WriteHead]) -> Result<MemoryMatrix> {
    let (m, n, h) = (mem.rows(), mem.width(), heads.len());
    let stack = |f: &dyn Fn(&WriteHead) -> Vec<f64>, w: usize| -> Result<Tensor> {
        Ok(Tensor::new(&[1, h, w], heads.iter().flat_map(f).collect())?)
    };
    let mut g = Graph::no_grad();
    let mv = g.constant(mem.as_tensor().reshape(&[1, m, n])?);
    let a = g.constant(stack(&|w| w.addr.as_slice().to_vec(), m)?);
    let e = g.constant(stack(&|w| w.erase.clone(), n)?);
    let u = g.constant(stack(&|w| w.add.clone(), n)?);
    let out = write_graph(&mut g, mv, a, e, u)?;
    Ok(MemoryMatrix::from_tensor(g.value(out).reshape(&[m, n])?).expect("rank 2"))
}

/// `Σᵢ a[i]·M[i]`.
pub fn ntm_read(mem: &MemoryMatrix, a: &AddressWeights) -> Vec<f64> {
    let mut r = vec![0.0; mem.width()];
    for (i, &w) in a.as_slice().iter().enumerate() {
        for (rj, v) in r.iter_mut().zip(mem.cell(i)) {
            *rj += w * v;
        }
    }
    r
}

// ---------------------------------------------------------------------------
// layer

/// LSTM-controlled memory layer mapping `[B, input]` to `[B, output]` per step.
#[derive(Debug, Clone)]
pub struct NtmLayer {
    pub cfg: NtmConfig,
    w_ih: ParamId,
    w_hh: ParamId,
    b_lstm: ParamId,
    w_read: ParamId,
    b_read: ParamId,
    w_write: ParamId,
    b_write: ParamId,
    w_out_h: ParamId,
    w_out_r: ParamId,
    b_out: ParamId,
}

impl NtmLayer {
    pub fn new(params: &mut ParamSet, prefix: &str, cfg: NtmConfig, rng: &mut impl rand::Rng) -> Result<Self> {
        cfg.validate()?;
        let (c, hn) = (cfg.controller, cfg.heads * cfg.n);
        let lstm_in = cfg.input + hn;
        let w_ih = params.uniform(format!("{prefix}.lstm.w_ih"), &[4 * c, lstm_in], c, rng);
        let w_hh = params.uniform(format!("{prefix}.lstm.w_hh"), &[4 * c, c], c, rng);
        let b_lstm = params.uniform(format!("{prefix}.lstm.b"), &[4 * c], c, rng);
        // forget-gate bias starts at 1
        for v in &mut params.get_mut(b_lstm).data_mut()[c..2 * c] {
            *v = 1.0;
        }
        let rw = cfg.heads * cfg.read_width();
        let ww = cfg.heads * cfg.write_width();
        Ok(NtmLayer {
            w_ih,
            w_hh,
            b_lstm,
            w_read: params.uniform(format!("{prefix}.read.w"), &[rw, c], c, rng),
            b_read: params.uniform(format!("{prefix}.read.b"), &[rw], c, rng),
            w_write: params.uniform(format!("{prefix}.write.w"), &[ww, c], c, rng),
            b_write: params.uniform(format!("{prefix}.write.b"), &[ww], c, rng),
            w_out_h: params.uniform(format!("{prefix}.out.w_h"), &[cfg.output, c], c + hn, rng),
            w_out_r: params.uniform(format!("{prefix}.out.w_r"), &[cfg.output, hn], c + hn, rng),
            b_out: params.uniform(format!("{prefix}.out.b"), &[cfg.output], c + hn, rng),
            cfg,
        })
    }

    /// LSTM update on `concat(x, r_prev)`; returns `(h, cell)`.
    pub fn controller_step(&self, g: &mut Graph, p: &Bound, x: Var, r_prev: Var, h: Var, cell: Var) -> Result<(Var, Var)> {
        let c = self.cfg.controller;
        let inp = g.concat(&[x, r_prev], 1)?;
        let zi = g.linear(inp, p[self.w_ih], Some(p[self.b_lstm]))?;
        let zh = g.linear(h, p[self.w_hh], None)?;
        let z = g.add(zi, zh)?;
        let mut gate = |k: usize| g.narrow(z, 1, k * c, c);
        let (zi, zf, zg, zo) = (gate(0)?, gate(1)?, gate(2)?, gate(3)?);
        let i = g.sigmoid(zi);
        let f = g.sigmoid(zf);
        let cand = g.tanh(zg);
        let o = g.sigmoid(zo);
        let kept = g.mul(f, cell)?;
        let new = g.mul(i, cand)?;
        let cell = g.add(kept, new)?;
        let tc = g.tanh(cell);
        let h = g.mul(o, tc)?;
        Ok((h, cell))
    }

    fn head_controls(&self, g: &mut Graph, p: &Bound, h: Var, write: bool) -> Result<HeadControls> {
        let (b, heads, n) = (g.shape(h)[0], self.cfg.heads, self.cfg.n);
        let (w, bias, width) = if write {
            (self.w_write, self.b_write, self.cfg.write_width())
        } else {
            (self.w_read, self.b_read, self.cfg.read_width())
        };
        let raw = g.linear(h, p[w], Some(p[bias]))?;
        let raw = g.reshape(raw, &[b, heads, width])?;
        let mut field = |start: usize, len: usize| g.narrow(raw, 2, start, len);
        let key = field(0, n)?;
        let beta = field(n, 1)?;
        let gate = field(n + 1, 1)?;
        let shift = field(n + 2, 3)?;
        let gamma = field(n + 5, 1)?;
        let extra = if write { Some((field(n + 6, n)?, field(2 * n + 6, n)?)) } else { None };
        let key = g.tanh(key);
        let beta = g.softplus(beta);
        let gate = g.sigmoid(gate);
        let shift = g.softmax(shift, 2)?;
        let gamma = g.softplus(gamma);
        let gamma = g.add_scalar(gamma, 1.0);
        let (erase, add) = match extra {
            Some((e, a)) => (Some(g.sigmoid(e)), Some(g.tanh(a))),
            None => (None, None),
        };
        Ok(HeadControls {
            key,
            beta,
            gate,
            shift,
            gamma,
            erase,
            add,
        })
    }

    /// `W_h·h + W_r·r + b`.
    pub fn output(&self, g: &mut Graph, p: &Bound, h: Var, r: Var) -> Result<Var> {
        let yh = g.linear(h, p[self.w_out_h], Some(p[self.b_out]))?;
        let yr = g.linear(r, p[self.w_out_r], None)?;
        Ok(g.add(yh, yr)?)
    }

    /// One step on `x: [B, input]`.
    pub fn step(&self, g: &mut Graph, p: &Bound, s: &NtmStateVars, x: Var) -> Result<(Var, NtmStateVars)> {
        let b = g.shape(x)[0];
        let (h, cell) = self.controller_step(g, p, x, s.r, s.h, s.cell)?;
        let wc = self.head_controls(g, p, h, true)?;
        let write = address_graph(g, &wc, s.write, s.mem)?;
        let mem = write_graph(g, s.mem, write, wc.erase.expect("write head"), wc.add.expect("write head"))?;
        let rc = self.head_controls(g, p, h, false)?;
        let read = address_graph(g, &rc, s.read, mem)?;
        let r = g.bmm(read, mem)?;
        let r = g.reshape(r, &[b, self.cfg.heads * self.cfg.n])?;
        let y = self.output(g, p, h, r)?;
        Ok((
            y,
            NtmStateVars {
                h,
                cell,
                mem,
                read,
                write,
                r,
            },
        ))
    }

    /// Folds [`NtmLayer::step`] over `xs: [B, T, input]`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, xs: Var, state: NtmStateVars) -> Result<(Var, NtmStateVars)> {
        let (b, t, d) = {
            let s = g.shape(xs);
            (s[0], s[1], s[2])
        };
        let mut state = state;
        let mut ys = Vec::with_capacity(t);
        for i in 0..t {
            let x = g.narrow(xs, 1, i, 1)?;
            let x = g.reshape(x, &[b, d])?;
            let (y, next) = self.step(g, p, &state, x)?;
            ys.push(g.reshape(y, &[b, 1, self.cfg.output])?);
            state = next;
        }
        Ok((g.concat(&ys, 1)?, state))
    }

    /// No-gradient evaluation, one small tape per step.
    pub fn eval(&self, params: &ParamSet, xs: &Tensor, m: usize) -> Result<Tensor> {
        let (b, t, d) = (xs.shape()[0], xs.shape()[1], xs.shape()[2]);
        let mut state = NtmState::fresh(b, &self.cfg, m);
        let mut out = Vec::with_capacity(b * t * self.cfg.output);
        let mut steps = Vec::with_capacity(t);
        for i in 0..t {
            let mut g = Graph::no_grad();
            let p = params.bind(&mut g);
            let x = crate::numeric::kernels::narrow(xs, 1, i, 1)?.reshape(&[b, d])?;
            let x = g.constant(x);
            let sv = state.constants(&mut g);
            let (y, next) = self.step(&mut g, &p, &sv, x)?;
            steps.push(g.value(y).clone());
            state = NtmState::from_graph(&g, &next);
        }
        for bi in 0..b {
            for y in &steps {
                let o = self.cfg.output;
                out.extend_from_slice(&y.data()[bi * o..(bi + 1) * o]);
            }
        }
        Ok(Tensor::new(&[b, t, self.cfg.output], out)?)
    }
}

// ---------------------------------------------------------------------------
// token model

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NtmModelConfig {
    pub vocab: usize,
    /// Embedding and layer output width.
    pub d: usize,
    pub controller: usize,
    pub n: usize,
    pub m: usize,
    pub heads: usize,
}

impl NtmModelConfig {
    /// `c = d = 104`, `n = 32`, four read and four write heads.
    pub fn paper(vocab: usize) -> Self {
        NtmModelConfig {
            vocab,
            d: 104,
            controller: 104,
            n: 32,
            m: 96,
            heads: 4,
        }
    }

    /// `c = d = 32`, `n = 16`, two read and two write heads.
    pub fn desk(vocab: usize) -> Self {
        NtmModelConfig {
            vocab,
            d: 32,
            controller: 32,
            n: 16,
            m: 36,
            heads: 2,
        }
    }

    fn layer(&self) -> NtmConfig {
        NtmConfig {
            input: self.d,
            controller: self.controller,
            output: self.d,
            n: self.n,
            m: self.m,
            heads: self.heads,
        }
    }
}

/// Embedding, memory layer, linear decoder.
#[derive(Debug, Clone)]
pub struct NtmModel {
    pub cfg: NtmModelConfig,
    params: ParamSet,
    embed: ParamId,
    layer: NtmLayer,
    dec_w: ParamId,
    dec_b: ParamId,
}

impl NtmModel {
    pub fn new(cfg: NtmModelConfig, seed: u64) -> Result<Self> {
        if cfg.vocab == 0 {
            return Err(NtmError::Config("vocab must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        let embed = p.normal("embed", &[cfg.vocab, cfg.d], EMBED_STD, &mut rng);
        let layer = NtmLayer::new(&mut p, "ntm", cfg.layer(), &mut rng)?;
        let dec_w = p.uniform("decoder.w", &[cfg.vocab, cfg.d], cfg.d, &mut rng);
        let dec_b = p.uniform("decoder.b", &[cfg.vocab], cfg.d, &mut rng);
        Ok(NtmModel {
            cfg,
            params: p,
            embed,
            layer,
            dec_w,
            dec_b,
        })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn layer(&self) -> &NtmLayer {
        &self.layer
    }

    /// Teacher-forced logits `[B, T, vocab]`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, tokens: &[Vec<usize>], m: usize) -> Result<Var> {
        let b = tokens.len();
        let t = tokens.first().map_or(0, Vec::len);
        if b == 0 || t == 0 || tokens.iter().any(|r| r.len() != t) {
            return Err(NtmError::Config("token batch must be non-empty and rectangular".into()));
        }
        let ids: Vec<usize> = tokens.iter().flatten().copied().collect();
        let x = g.gather(p[self.embed], &ids)?;
        let x = g.reshape(x, &[b, t, self.cfg.d])?;
        let s = NtmState::fresh(b, &self.layer.cfg, m).constants(g);
        let (y, _) = self.layer.forward(g, p, x, s)?;
        Ok(g.linear(y, p[self.dec_w], Some(p[self.dec_b]))?)
    }

    pub fn start(&self, batch: usize, m: usize) -> NtmState {
        NtmState::fresh(batch, &self.layer.cfg, m)
    }

    /// Feeds one token per sequence; returns logits `[B, vocab]`.
    pub fn step(&self, state: &mut NtmState, tokens: &[usize]) -> Result<Tensor> {
        let mut g = Graph::no_grad();
        let p = self.params.bind(&mut g);
        let x = g.gather(p[self.embed], tokens)?;
        let sv = state.constants(&mut g);
        let (y, next) = self.layer.step(&mut g, &p, &sv, x)?;
        let logits = g.linear(y, p[self.dec_w], Some(p[self.dec_b]))?;
        *state = NtmState::from_graph(&g, &next);
        Ok(g.value(logits).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mem(rows: &[Vec<f64>]) -> MemoryMatrix {
        MemoryMatrix::from_tensor(Tensor::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn content_addressing_limits() {
        let m = mem(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.5]]);
        let a = content_address(&[0.3, 0.7], 1e-9, &m).unwrap();
        assert!(a.as_slice().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-9));
        let same = mem(&vec![vec![0.2, 0.4]; 4]);
        let a = content_address(&[0.9, -0.1], 5.0, &same).unwrap();
        assert!(a.as_slice().iter().all(|&v| (v - 0.25).abs() < 1e-12));
        let a = content_address(&[1.0, 0.0], 50.0, &mem(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![0.0, -1.0]])).unwrap();
        assert!(a.as_slice()[1] >= 0.999);
    }

    #[test]
    fn interpolation_limits() {
        let p = AddressWeights::from_vec(vec![1.0, 0.0, 0.0]);
        let c = AddressWeights::from_vec(vec![0.2, 0.3, 0.5]);
        let out = interpolate(&p, &c, 1.0 - 1e-12);
        for (a, b) in out.as_slice().iter().zip(c.as_slice()) {
            assert!((a - b).abs() < 1e-11);
        }
        assert_eq!(interpolate(&c, &c, 0.5), c);
    }

    #[test]
    fn sharpen_cases() {
        let a = AddressWeights::from_vec(vec![0.1, 0.2, 0.7]);
        let s = sharpen(&a, 1.0).unwrap();
        for (x, y) in s.as_slice().iter().zip(a.as_slice()) {
            assert!((x - y).abs() < 1e-15);
        }
        let u = sharpen(&AddressWeights::from_vec(vec![0.25; 4]), 17.0).unwrap();
        assert!(u.as_slice().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let z = sharpen(&AddressWeights::from_vec(vec![0.9, 0.1, 0.0, 0.0]), 40.0).unwrap();
        assert!(z.as_slice().iter().all(|v| v.is_finite()));
        assert!((z.as_slice()[0] - 1.0).abs() < 1e-30 + 1e-15);
        assert!(sharpen(&AddressWeights::from_vec(vec![0.0; 3]), 2.0).is_err());
    }

    #[test]
    fn erase_and_add() {
        let m0 = mem(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let head = WriteHead {
            addr: AddressWeights::from_vec(vec![1.0, 0.0]),
            erase: vec![1.0, 1.0],
            add: vec![0.0, 0.0],
        };
        let out = ntm_write(&m0, &[head]).unwrap();
        assert_eq!(out.cell(0), &[0.0, 0.0]);
        assert_eq!(out.cell(1), &[3.0, 4.0]);
        let idle = WriteHead {
            addr: AddressWeights::from_vec(vec![0.5, 0.5]),
            erase: vec![0.0, 0.0],
            add: vec![0.0, 0.0],
        };
        assert_eq!(ntm_write(&m0, &[idle]).unwrap(), m0);
    }

    #[test]
    fn read_cases() {
        let m = mem(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(ntm_read(&m, &AddressWeights::from_vec(vec![0.0, 1.0])), vec![3.0, 4.0]);
        assert_eq!(ntm_read(&m, &AddressWeights::from_vec(vec![0.5, 0.5])), vec![2.0, 3.0]);
    }
}

#[cfg(test)]
mod model_tests {
    use super::*;

    #[test]
    fn parameter_counts() {
        let model = NtmModel::new(NtmModelConfig::paper(6), 0).unwrap();
        assert_eq!(model.params().count(), 224_478);
        let cfg = NtmConfig {
            input: 128,
            controller: 128,
            output: 128,
            n: 16,
            m: 512,
            heads: 1,
        };
        let mut p = ParamSet::new();
        NtmLayer::new(&mut p, "ntm", cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(p.count(), 168_140);
    }

    #[test]
    fn forward_matches_stepping() {
        let model = NtmModel::new(NtmModelConfig::desk(4), 2).unwrap();
        let tokens = vec![vec![0, 1, 2, 3, 1, 1], vec![3, 2, 1, 0, 0, 2]];
        let mut g = Graph::no_grad();
        let p = model.params().bind(&mut g);
        let logits = model.forward(&mut g, &p, &tokens, 20).unwrap();
        assert_eq!(g.shape(logits), [2, 6, 4]);
        let mut state = model.start(2, 20);
        for t in 0..6 {
            let col: Vec<usize> = tokens.iter().map(|r| r[t]).collect();
            let out = model.step(&mut state, &col).unwrap();
            for b in 0..2 {
                for v in 0..4 {
                    assert!((out.get(&[b, v]) - g.value(logits).get(&[b, t, v])).abs() < 1e-12);
                }
            }
        }
        assert!(g.value(logits).is_finite());
    }

    #[test]
    fn addresses_stay_normalised() {
        let model = NtmModel::new(NtmModelConfig::desk(4), 9).unwrap();
        let mut state = model.start(1, 16);
        for t in 0..10 {
            model.step(&mut state, &[t % 4]).unwrap();
            for addr in [&state.read, &state.write] {
                for h in 0..2 {
                    let s: f64 = (0..16).map(|i| addr.get(&[0, h, i])).sum();
                    assert!((s - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}
