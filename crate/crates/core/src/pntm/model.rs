use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ExecMode, FeedForward, MinGru, PntmConfig, PntmError, PntmLayer, PntmState, Result, RmsNorm};
use crate::numeric::{Bound, Graph, ParamId, ParamSet, Tensor, Var};

const EMBED_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PntmModelConfig {
    pub vocab: usize,
    pub layer: PntmConfig,
    /// minGRU state size as a multiple of `d`.
    pub expansion: usize,
    /// Feedforward hidden size as a multiple of `d`.
    pub ff_mult: usize,
}

impl PntmModelConfig {
    /// Full-size widths: `d = 104`, `n = 32`, four head pairs.
    pub fn paper(vocab: usize) -> Self {
        PntmModelConfig {
            vocab,
            layer: PntmConfig {
                d: 104,
                n: 32,
                m: 96,
                heads: 4,
                ..PntmConfig::default()
            },
            expansion: 2,
            ff_mult: 4,
        }
    }

    /// Small widths for quick runs: `d = 32`, `n = 16`, two head pairs.
    pub fn desk(vocab: usize) -> Self {
        PntmModelConfig {
            vocab,
            layer: PntmConfig::default(),
            expansion: 2,
            ff_mult: 4,
        }
    }
}

/// Embedding, a pre-norm minGRU block, a pre-norm memory block and a linear
/// decoder to token logits.
#[derive(Debug, Clone)]
pub struct PntmModel {
    pub cfg: PntmModelConfig,
    params: ParamSet,
    embed: ParamId,
    norm_rnn: RmsNorm,
    rnn: MinGru,
    norm_ff1: RmsNorm,
    ff1: FeedForward,
    norm_mem: RmsNorm,
    memory: PntmLayer,
    norm_ff2: RmsNorm,
    ff2: FeedForward,
    dec_w: ParamId,
    dec_b: ParamId,
}

/// Recurrent state of the whole model for step-by-step decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    /// minGRU hidden state `[B, expansion·d]`.
    pub hidden: Tensor,
    pub memory: PntmState,
}

/// Per-step values of the memory layer, for inspection.
#[derive(Debug, Clone)]
pub struct StepTrace {
    /// Read addresses used this step `[B, H, m]`.
    pub read_addr: Tensor,
    /// Write addresses used this step `[B, H, m]`.
    pub write_addr: Tensor,
    /// Mixed read vectors `[B, H, n]`.
    pub reads: Tensor,
    /// Written content `[B, n]`.
    pub content: Tensor,
}

impl PntmModel {
    pub fn new(cfg: PntmModelConfig, seed: u64) -> Result<Self> {
        cfg.layer.validate()?;
        if cfg.vocab == 0 || cfg.expansion == 0 || cfg.ff_mult == 0 {
            return Err(PntmError::Config("vocab, expansion and ff_mult must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        let d = cfg.layer.d;
        let embed = p.normal("embed", &[cfg.vocab, d], EMBED_STD, &mut rng);
        let norm_rnn = RmsNorm::new(&mut p, "rnn.norm", d);
        let rnn = MinGru::new(&mut p, "rnn", d, cfg.expansion, &mut rng);
        let norm_ff1 = RmsNorm::new(&mut p, "ff1.norm", d);
        let ff1 = FeedForward::new(&mut p, "ff1", d, cfg.ff_mult, &mut rng);
        let norm_mem = RmsNorm::new(&mut p, "mem.norm", d);
        let memory = PntmLayer::new(&mut p, "mem", cfg.layer.clone(), &mut rng)?;
        let norm_ff2 = RmsNorm::new(&mut p, "ff2.norm", d);
        let ff2 = FeedForward::new(&mut p, "ff2", d, cfg.ff_mult, &mut rng);
        let dec_w = p.uniform("decoder.w", &[cfg.vocab, d], d, &mut rng);
        let dec_b = p.uniform("decoder.b", &[cfg.vocab], d, &mut rng);
        Ok(PntmModel {
            cfg,
            params: p,
            embed,
            norm_rnn,
            rnn,
            norm_ff1,
            ff1,
            norm_mem,
            memory,
            norm_ff2,
            ff2,
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

    pub fn layer(&self) -> &PntmLayer {
        &self.memory
    }

    fn embed_tokens(&self, g: &mut Graph, p: &Bound, tokens: &[Vec<usize>]) -> Result<Var> {
        let b = tokens.len();
        let t = tokens.first().map_or(0, Vec::len);
        if b == 0 || t == 0 || tokens.iter().any(|r| r.len() != t) {
            return Err(PntmError::Config("token batch must be non-empty and rectangular".into()));
        }
        let ids: Vec<usize> = tokens.iter().flatten().copied().collect();
        let x = g.gather(p[self.embed], &ids)?;
        Ok(g.reshape(x, &[b, t, self.cfg.layer.d])?)
    }

    fn residual(g: &mut Graph, x: Var, y: Var) -> Result<Var> {
        Ok(g.add(x, y)?)
    }

    /// Teacher-forced logits `[B, T, vocab]` for a rectangular token batch.
    pub fn forward(&self, g: &mut Graph, p: &Bound, tokens: &[Vec<usize>], m: usize, mode: ExecMode) -> Result<Var> {
        let x = self.embed_tokens(g, p, tokens)?;
        let b = tokens.len();
        let hn = self.norm_rnn.apply(g, p, x)?;
        let (hr, _) = match mode {
            ExecMode::Parallel => self.rnn.forward_parallel(g, p, hn, None)?,
            ExecMode::Sequential => self.rnn_sequential(g, p, hn)?,
        };
        let x = Self::residual(g, x, hr)?;
        let hn = self.norm_ff1.apply(g, p, x)?;
        let hf = self.ff1.apply(g, p, hn)?;
        let x = Self::residual(g, x, hf)?;
        let hn = self.norm_mem.apply(g, p, x)?;
        let (hm, _) = match mode {
            ExecMode::Parallel => self.memory.forward_parallel(g, p, hn, m, None)?,
            ExecMode::Sequential => {
                let s = PntmState::fresh(b, m, self.cfg.layer.n, self.cfg.layer.heads).constants(g);
                self.memory.forward_sequential(g, p, hn, s, None)?
            }
        };
        let x = Self::residual(g, x, hm)?;
        let hn = self.norm_ff2.apply(g, p, x)?;
        let hf = self.ff2.apply(g, p, hn)?;
        let x = Self::residual(g, x, hf)?;
        Ok(g.linear(x, p[self.dec_w], Some(p[self.dec_b]))?)
    }

    fn rnn_sequential(&self, g: &mut Graph, p: &Bound, xs: Var) -> Result<(Var, Var)> {
        let (b, t, d) = {
            let s = g.shape(xs);
            (s[0], s[1], s[2])
        };
        let mut h = g.constant(Tensor::zeros(&[b, self.rnn.hidden]));
        let mut ys = Vec::with_capacity(t);
        for i in 0..t {
            let x = g.narrow(xs, 1, i, 1)?;
            let x = g.reshape(x, &[b, d])?;
            let (y, next) = self.rnn.step(g, p, x, h)?;
            ys.push(g.reshape(y, &[b, 1, d])?);
            h = next;
        }
        Ok((g.concat(&ys, 1)?, h))
    }

    /// Fresh decoding state for `batch` sequences and `m` memory rows.
    pub fn start(&self, batch: usize, m: usize) -> ModelState {
        ModelState {
            hidden: Tensor::zeros(&[batch, self.rnn.hidden]),
            memory: PntmState::fresh(batch, m, self.cfg.layer.n, self.cfg.layer.heads),
        }
    }

    /// Feeds one token per sequence and returns logits `[B, vocab]`, with
    /// shift thresholding at `tau` when given.
    pub fn step(&self, state: &mut ModelState, tokens: &[usize], tau: Option<f64>) -> Result<Tensor> {
        Ok(self.step_traced(state, tokens, tau)?.0)
    }

    pub fn step_traced(
        &self,
        state: &mut ModelState,
        tokens: &[usize],
        tau: Option<f64>,
    ) -> Result<(Tensor, StepTrace)> {
        let mut g = Graph::no_grad();
        let p = self.params.bind(&mut g);
        let b = tokens.len();
        let x = g.gather(p[self.embed], tokens)?;
        let h = g.constant(state.hidden.clone());
        let mem = state.memory.constants(&mut g);

        let hn = self.norm_rnn.apply(&mut g, &p, x)?;
        let (hr, h) = self.rnn.step(&mut g, &p, hn, h)?;
        let x = Self::residual(&mut g, x, hr)?;
        let hn = self.norm_ff1.apply(&mut g, &p, x)?;
        let hf = self.ff1.apply(&mut g, &p, hn)?;
        let x = Self::residual(&mut g, x, hf)?;
        let hn = self.norm_mem.apply(&mut g, &p, x)?;
        let out = self.memory.step(&mut g, &p, &mem, hn, tau)?;
        let x = Self::residual(&mut g, x, out.y)?;
        let hn = self.norm_ff2.apply(&mut g, &p, x)?;
        let hf = self.ff2.apply(&mut g, &p, hn)?;
        let x = Self::residual(&mut g, x, hf)?;
        let logits = g.linear(x, p[self.dec_w], Some(p[self.dec_b]))?;
        debug_assert_eq!(g.shape(logits), [b, self.cfg.vocab]);

        let trace = StepTrace {
            read_addr: state.memory.read.clone(),
            write_addr: state.memory.write.clone(),
            reads: g.value(out.reads).clone(),
            content: g.value(out.content).clone(),
        };
        state.hidden = g.value(h).clone();
        state.memory = PntmState::from_graph(&g, &out.state);
        Ok((g.value(logits).clone(), trace))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_size_parameter_count() {
        let model = PntmModel::new(PntmModelConfig::paper(6), 0).unwrap();
        assert_eq!(model.params().count(), 260_822);
    }

    #[test]
    fn modes_agree_and_shapes_hold() {
        let model = PntmModel::new(PntmModelConfig::desk(5), 3).unwrap();
        let tokens = vec![vec![0, 1, 2, 3, 4, 0, 1, 2], vec![4, 4, 3, 2, 1, 0, 0, 1]];
        let mut g = Graph::no_grad();
        let p = model.params().bind(&mut g);
        let par = model.forward(&mut g, &p, &tokens, 36, ExecMode::Parallel).unwrap();
        let seq = model.forward(&mut g, &p, &tokens, 36, ExecMode::Sequential).unwrap();
        assert_eq!(g.shape(par), [2, 8, 5]);
        assert!(g.value(par).max_abs_diff(g.value(seq)) < 1e-5);

        // token-by-token decoding without thresholding reproduces the fold
        let mut state = model.start(2, 36);
        for t in 0..8 {
            let col: Vec<usize> = tokens.iter().map(|r| r[t]).collect();
            let logits = model.step(&mut state, &col, None).unwrap();
            for b in 0..2 {
                for v in 0..5 {
                    let want = g.value(seq).get(&[b, t, v]);
                    assert!((logits.get(&[b, v]) - want).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn thresholded_decoding_keeps_addresses_normalised() {
        let model = PntmModel::new(PntmModelConfig::desk(5), 1).unwrap();
        let mut state = model.start(1, 36);
        for t in 0..12 {
            model.step(&mut state, &[t % 5], Some(0.01)).unwrap();
            for addr in [&state.memory.read, &state.memory.write] {
                assert!(addr.data().iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
                for h in 0..2 {
                    let s: f64 = (0..36).map(|i| addr.get(&[0, h, i])).sum();
                    assert!((s - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}
