//! Forward-pass latency of the recurrent baseline, the parallel model run
//! step by step, and the parallel model run with scans.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};
use crate::numeric::{kernels, Graph, ParamSet, Tensor};
use crate::ntm::{NtmConfig, NtmLayer};
use crate::pntm::{MinGru, PntmConfig, PntmLayer, PntmState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub min_exp: u32,
    pub max_exp: u32,
    pub batch: usize,
    pub dim: usize,
    pub mem: usize,
    pub warmup: usize,
    pub runs: usize,
    pub seed: u64,
    /// Also time the NTM baseline.
    pub baseline: bool,
    /// Upper bound on transient memory of one parallel chunk, in bytes.
    pub chunk_budget: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            min_exp: 3,
            max_exp: 13,
            batch: 8,
            dim: 128,
            mem: 512,
            warmup: 3,
            runs: 10,
            seed: 0,
            baseline: true,
            chunk_budget: 768 << 20,
        }
    }
}

impl BenchConfig {
    /// Time steps per parallel chunk so that the per-step memory tensors
    /// and their log-space intermediates stay under the budget.
    pub fn chunk_len(&self) -> usize {
        let per_step = self.batch * self.mem * BENCH_CELL * 8 * 10;
        let raw = (self.chunk_budget / per_step.max(1)).max(1);
        1 << raw.ilog2()
    }
}

const BENCH_CELL: usize = 16;
const BENCH_EXPANSION: usize = 3;

/// Recurrent baseline of the benchmark: one read and one write head.
pub struct BenchNtm {
    pub layer: NtmLayer,
    pub params: ParamSet,
    mem: usize,
}

impl BenchNtm {
    pub fn new(dim: usize, mem: usize, seed: u64) -> Result<Self> {
        let mut params = ParamSet::new();
        let cfg = NtmConfig {
            input: dim,
            controller: dim,
            output: dim,
            n: BENCH_CELL,
            m: mem,
            heads: 1,
        };
        let layer = NtmLayer::new(&mut params, "ntm", cfg, &mut ChaCha8Rng::seed_from_u64(seed))?;
        Ok(BenchNtm { layer, params, mem })
    }

    pub fn forward(&self, xs: &Tensor) -> Result<Tensor> {
        Ok(self.layer.eval(&self.params, xs, self.mem)?)
    }
}

/// minGRU sublayer followed by a one-head memory layer.
pub struct BenchPntm {
    pub rnn: MinGru,
    pub layer: PntmLayer,
    pub params: ParamSet,
    mem: usize,
}

impl BenchPntm {
    pub fn new(dim: usize, mem: usize, seed: u64) -> Result<Self> {
        let mut params = ParamSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rnn = MinGru::new(&mut params, "rnn", dim, BENCH_EXPANSION, &mut rng);
        let cfg = PntmConfig {
            d: dim,
            n: BENCH_CELL,
            m: mem,
            heads: 1,
            ..PntmConfig::default()
        };
        let layer = PntmLayer::new(&mut params, "mem", cfg, &mut rng)?;
        Ok(BenchPntm { rnn, layer, params, mem })
    }

    /// One small tape per time step.
    pub fn forward_sequential(&self, xs: &Tensor) -> Result<Tensor> {
        let (b, t, d) = (xs.shape()[0], xs.shape()[1], xs.shape()[2]);
        let mut h = Tensor::zeros(&[b, self.rnn.hidden]);
        let mut state = PntmState::fresh(b, self.mem, BENCH_CELL, 1);
        let mut steps = Vec::with_capacity(t);
        for i in 0..t {
            let mut g = Graph::no_grad();
            let p = self.params.bind(&mut g);
            let x = g.constant(kernels::narrow(xs, 1, i, 1)?.reshape(&[b, d])?);
            let hv = g.constant(h);
            let (y, hn) = self.rnn.step(&mut g, &p, x, hv)?;
            let sv = state.constants(&mut g);
            let out = self.layer.step(&mut g, &p, &sv, y, None)?;
            steps.push(g.value(out.y).reshape(&[b, 1, d])?);
            h = g.value(hn).clone();
            state = PntmState::from_graph(&g, &out.state);
        }
        let parts: Vec<&Tensor> = steps.iter().collect();
        Ok(kernels::concat(&parts, 1)?)
    }

    /// Scans over chunks of `chunk` steps, carrying state across chunks.
    pub fn forward_parallel(&self, xs: &Tensor, chunk: usize) -> Result<Tensor> {
        let (b, t) = (xs.shape()[0], xs.shape()[1]);
        let mut h: Option<Tensor> = None;
        let mut carry: Option<PntmState> = None;
        let mut parts = Vec::new();
        let mut start = 0;
        while start < t {
            let len = chunk.max(1).min(t - start);
            let mut g = Graph::no_grad();
            let p = self.params.bind(&mut g);
            let x = g.constant(kernels::narrow(xs, 1, start, len)?);
            let h0 = h.take().map(|h| g.constant(h));
            let (y, h_last) = self.rnn.forward_parallel(&mut g, &p, x, h0)?;
            let cv = carry.as_ref().map(|s| s.constants(&mut g));
            let (y, next) = self.layer.forward_parallel(&mut g, &p, y, self.mem, cv.as_ref())?;
            parts.push(g.value(y).clone());
            h = Some(g.value(h_last).clone());
            carry = Some(PntmState::from_graph(&g, &next));
            start += len;
        }
        let refs: Vec<&Tensor> = parts.iter().collect();
        let out = kernels::concat(&refs, 1)?;
        debug_assert_eq!(out.shape()[..2], [b, t]);
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub mean: f64,
    pub std: f64,
}

impl Timing {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Timing { mean, std: var.sqrt() }
    }
}

/// Wall time of `f` over `runs` timed calls after `warmup` untimed ones.
pub fn time_runs(warmup: usize, runs: usize, mut f: impl FnMut() -> Result<()>) -> Result<Timing> {
    for _ in 0..warmup {
        f()?;
    }
    let mut samples = Vec::with_capacity(runs);
    for _ in 0..runs.max(1) {
        let t0 = Instant::now();
        f()?;
        samples.push(t0.elapsed().as_secs_f64());
    }
    Ok(Timing::from_samples(&samples))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub len: usize,
    pub ntm_mean: Option<f64>,
    pub ntm_std: Option<f64>,
    pub seq_mean: Option<f64>,
    pub seq_std: Option<f64>,
    pub par_mean: Option<f64>,
    pub par_std: Option<f64>,
    /// Sequential over parallel mean time.
    pub speedup_par_vs_seq: Option<f64>,
    /// Baseline over parallel mean time.
    pub speedup_par_vs_ntm: Option<f64>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub config: BenchConfig,
    pub threads: usize,
    pub chunk_len: usize,
    pub ntm_params: usize,
    pub pntm_params: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchResult {
    pub fn write_csv(&self, w: impl std::io::Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row).map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }
}

fn random_input(batch: usize, len: usize, dim: usize, seed: u64) -> Tensor {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..batch * len * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    Tensor::new(&[batch, len, dim], data).expect("consistent shape")
}

/// Runs every length `2^min_exp ..= 2^max_exp` serially.
pub fn bench(cfg: &BenchConfig, mut progress: impl FnMut(&BenchRow)) -> Result<BenchResult> {
    if cfg.min_exp > cfg.max_exp || cfg.batch == 0 || cfg.dim == 0 || cfg.mem < 3 {
        return Err(HarnessError::Config("invalid benchmark ranges".into()));
    }
    let ntm = BenchNtm::new(cfg.dim, cfg.mem, cfg.seed)?;
    let pntm = BenchPntm::new(cfg.dim, cfg.mem, cfg.seed)?;
    let chunk = cfg.chunk_len();
    let mut rows = Vec::new();
    for e in cfg.min_exp..=cfg.max_exp {
        let len = 1usize << e;
        let input_bytes = cfg.batch * len * cfg.dim * 8 * 4;
        let mut row = BenchRow {
            len,
            ntm_mean: None,
            ntm_std: None,
            seq_mean: None,
            seq_std: None,
            par_mean: None,
            par_std: None,
            speedup_par_vs_seq: None,
            speedup_par_vs_ntm: None,
            skipped: None,
        };
        if input_bytes > cfg.chunk_budget {
            row.skipped = Some(format!("inputs need {input_bytes} bytes, over the budget"));
        } else {
            let xs = random_input(cfg.batch, len, cfg.dim, cfg.seed ^ len as u64);
            if cfg.baseline {
                let n = time_runs(cfg.warmup, cfg.runs, || ntm.forward(&xs).map(drop))?;
                row.ntm_mean = Some(n.mean);
                row.ntm_std = Some(n.std);
            }
            let s = time_runs(cfg.warmup, cfg.runs, || pntm.forward_sequential(&xs).map(drop))?;
            let p = time_runs(cfg.warmup, cfg.runs, || pntm.forward_parallel(&xs, chunk).map(drop))?;
            row.seq_mean = Some(s.mean);
            row.seq_std = Some(s.std);
            row.par_mean = Some(p.mean);
            row.par_std = Some(p.std);
            row.speedup_par_vs_seq = Some(s.mean / p.mean);
            row.speedup_par_vs_ntm = row.ntm_mean.map(|n| n / p.mean);
        }
        progress(&row);
        rows.push(row);
    }
    Ok(BenchResult {
        config: cfg.clone(),
        threads: rayon::current_num_threads(),
        chunk_len: chunk,
        ntm_params: ntm.params.count(),
        pntm_params: pntm.params.count(),
        rows,
    })
}
