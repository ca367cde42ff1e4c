use serde::{Deserialize, Serialize};

use super::model::Decoder;
use super::{HarnessError, Result};
use crate::numeric::Tensor;
use crate::tasks::{task_rng, Task, TaskInstance};

/// Stream index of evaluation batches, apart from training batches.
const EVAL_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub task: Task,
    pub min_len: usize,
    pub max_len: usize,
    pub samples: usize,
    /// Shift threshold during decoding; none disables it.
    pub tau: Option<f64>,
    pub seed: u64,
    /// Memory rows the model was configured with; the evaluation memory is
    /// at least `2·max_len + 16`.
    pub memory: usize,
}

impl EvalConfig {
    pub fn new(task: Task, min_len: usize, max_len: usize) -> Self {
        EvalConfig {
            task,
            min_len,
            max_len,
            samples: 128,
            tau: Some(0.01),
            seed: 0,
            memory: 0,
        }
    }

    pub fn memory_rows(&self) -> usize {
        crate::memory::train_memory_size(self.max_len).max(self.memory)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthResult {
    pub len: usize,
    pub correct: usize,
    pub samples: usize,
    pub accuracy: f64,
    /// Sequences that hit the generation cap without emitting the end token.
    pub cap_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub samples_per_length: usize,
    pub tau: Option<f64>,
    pub memory: usize,
    pub lengths: Vec<LengthResult>,
    pub mean_accuracy: f64,
    pub max_accuracy: f64,
    pub min_accuracy: f64,
    pub cap_hits: usize,
}

/// Index of the largest entry of each row; ties go to the lowest index.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let v = logits.shape()[logits.rank() - 1];
    logits
        .data()
        .chunks(v)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
                .0
        })
        .collect()
}

/// Greedy decoding of a batch of same-length instances. Returns the
/// generated tokens before the end token, or `None` when the cap was hit.
pub fn greedy_decode<D: Decoder>(
    model: &D,
    items: &[TaskInstance],
    memory: usize,
    tau: Option<f64>,
) -> Result<Vec<Option<Vec<usize>>>> {
    let Some(first) = items.first() else {
        return Ok(Vec::new());
    };
    let vocab = first.task.vocab();
    let prompts = items
        .iter()
        .map(|i| {
            let mut p = vocab.encode(&i.input)?;
            p.push(vocab.separator());
            Ok(p)
        })
        .collect::<std::result::Result<Vec<_>, crate::tasks::TaskError>>()?;
    let plen = prompts[0].len();
    if prompts.iter().any(|p| p.len() != plen) {
        return Err(HarnessError::Config("greedy_decode needs equal-length inputs".into()));
    }
    let cap = 4 * (plen - 1) + 16;
    let b = items.len();
    let mut state = model.start(b, memory);
    let mut logits = Tensor::zeros(&[b, vocab.len()]);
    for t in 0..plen {
        let col: Vec<usize> = prompts.iter().map(|p| p[t]).collect();
        logits = model.step(&mut state, &col, tau)?;
    }
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); b];
    let mut finished = vec![false; b];
    for _ in 0..cap {
        let next = argmax_rows(&logits);
        for (i, &tok) in next.iter().enumerate() {
            if finished[i] {
                continue;
            }
            if tok == vocab.end() {
                finished[i] = true;
            } else {
                out[i].push(tok);
            }
        }
        if finished.iter().all(|&f| f) {
            break;
        }
        logits = model.step(&mut state, &next, tau)?;
    }
    Ok(out.into_iter().zip(finished).map(|(o, f)| f.then_some(o)).collect())
}

/// Exact-match accuracy per length with greedy decoding.
pub fn evaluate<D: Decoder>(model: &D, cfg: &EvalConfig) -> Result<EvalReport> {
    let vocab = cfg.task.vocab();
    if model.vocab_size() != vocab.len() {
        return Err(HarnessError::VocabMismatch {
            task: cfg.task,
            model: model.vocab_size(),
        });
    }
    if cfg.min_len < cfg.task.min_len() || cfg.min_len > cfg.max_len || cfg.samples == 0 {
        return Err(HarnessError::Config(format!(
            "evaluation range [{}, {}] with {} samples is invalid for {}",
            cfg.min_len, cfg.max_len, cfg.samples, cfg.task
        )));
    }
    let memory = cfg.memory_rows();
    let mut lengths = Vec::new();
    for len in cfg.min_len..=cfg.max_len {
        let mut rng = task_rng(cfg.seed, cfg.task, len, EVAL_STREAM);
        let items = (0..cfg.samples)
            .map(|_| cfg.task.generate(len, &mut rng))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let outputs = greedy_decode(model, &items, memory, cfg.tau)?;
        let mut correct = 0;
        let mut cap_hits = 0;
        for (item, out) in items.iter().zip(&outputs) {
            match out {
                Some(toks) if *toks == vocab.encode(&item.target)? => correct += 1,
                Some(_) => {}
                None => cap_hits += 1,
            }
        }
        lengths.push(LengthResult {
            len,
            correct,
            samples: cfg.samples,
            accuracy: correct as f64 / cfg.samples as f64,
            cap_hits,
        });
    }
    let accs: Vec<f64> = lengths.iter().map(|l| l.accuracy).collect();
    Ok(EvalReport {
        task: cfg.task,
        samples_per_length: cfg.samples,
        tau: cfg.tau,
        memory,
        mean_accuracy: accs.iter().sum::<f64>() / accs.len() as f64,
        max_accuracy: accs.iter().copied().fold(0.0, f64::max),
        min_accuracy: accs.iter().copied().fold(1.0, f64::min),
        cap_hits: lengths.iter().map(|l| l.cap_hits).sum(),
        lengths,
    })
}
