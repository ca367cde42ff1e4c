use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::model::{Model, ModelSpec};
use super::{HarnessError, Result};
use crate::numeric::{Graph, ParamSet, Tensor};
use crate::seeds::stream_seed;
use crate::tasks::{task_rng, TaskInstance};

/// Teacher-forced batch: `inputs[b][t]` predicts `targets[b][t]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Batch {
    pub inputs: Vec<Vec<usize>>,
    pub targets: Vec<usize>,
    pub mask: Vec<f64>,
}

impl Batch {
    /// Builds `input | target $` per instance, shifts by one token and pads
    /// with the end token under a zero mask.
    pub fn from_instances(items: &[TaskInstance]) -> Result<Self> {
        let seqs = items.iter().map(|i| i.build_sequence()).collect::<std::result::Result<Vec<_>, _>>()?;
        let end = items.first().map(|i| i.task.vocab().end()).unwrap_or(0);
        let t = seqs.iter().map(|(s, _)| s.len() - 1).max().unwrap_or(0);
        let mut batch = Batch {
            inputs: Vec::with_capacity(items.len()),
            targets: Vec::with_capacity(items.len() * t),
            mask: Vec::with_capacity(items.len() * t),
        };
        for (tokens, mask) in seqs {
            let n = tokens.len() - 1;
            let mut row = tokens[..n].to_vec();
            row.resize(t, end);
            batch.inputs.push(row);
            batch.targets.extend_from_slice(&tokens[1..]);
            batch.targets.extend(std::iter::repeat_n(end, t - n));
            batch.mask.extend_from_slice(&mask[1..]);
            batch.mask.extend(std::iter::repeat_n(0.0, t - n));
        }
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Adam with constant learning rate.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn update(&mut self, params: &mut ParamSet, grads: &[Tensor]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (i, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let g = grads[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let w = params.get_mut(id).data_mut();
            for j in 0..g.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                w[j] -= self.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Counts consecutive iterations with a vanishing gradient.
#[derive(Debug, Clone)]
pub struct EarlyStop {
    window: usize,
    threshold: f64,
    run: usize,
}

impl EarlyStop {
    pub fn new(window: usize, threshold: f64) -> Self {
        EarlyStop { window, threshold, run: 0 }
    }

    /// Records one gradient norm; true once the window is full.
    pub fn observe(&mut self, grad_inf: f64) -> bool {
        self.run = if grad_inf < self.threshold { self.run + 1 } else { 0 };
        self.run >= self.window
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterLog {
    pub iter: usize,
    pub len: usize,
    pub loss: f64,
    pub grad_inf: f64,
}

/// Result of one optimisation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub loss: f64,
    pub grad_inf: f64,
}

#[derive(Debug, Clone)]
pub struct Trainer {
    pub cfg: TrainConfig,
    pub model: Model,
    adam: Adam,
    stop: EarlyStop,
    len_rng: ChaCha8Rng,
    pub iter: usize,
    pub stopped_early: bool,
    pub log: Vec<IterLog>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let model = ModelSpec::for_training(&cfg).build(cfg.seed)?;
        Self::with_model(cfg, model)
    }

    pub fn with_model(cfg: TrainConfig, model: Model) -> Result<Self> {
        cfg.validate()?;
        if model.spec().vocab() != cfg.task.vocab().len() {
            return Err(HarnessError::VocabMismatch {
                task: cfg.task,
                model: model.spec().vocab(),
            });
        }
        let adam = Adam::new(model.params(), cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
        Ok(Trainer {
            adam,
            stop: EarlyStop::new(cfg.early_stop_window, cfg.early_stop_threshold),
            len_rng: ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, &[0x6c65_6e73])),
            iter: 0,
            stopped_early: false,
            log: Vec::new(),
            model,
            cfg,
        })
    }

    pub fn done(&self) -> bool {
        self.stopped_early || self.iter >= self.cfg.max_iters
    }

    /// Draws the next training batch: a uniform length, then `batch_size`
    /// instances from that iteration's stream.
    pub fn sample_batch(&mut self) -> Result<(usize, Batch)> {
        let len = self.len_rng.random_range(self.cfg.min_len..=self.cfg.max_len);
        let mut rng = task_rng(self.cfg.seed, self.cfg.task, len, self.iter as u64 + 1);
        let items = (0..self.cfg.batch_size)
            .map(|_| self.cfg.task.generate(len, &mut rng))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok((len, Batch::from_instances(&items)?))
    }

    /// Masked cross-entropy and its parameter gradients.
    pub fn loss_and_grads(&self, batch: &Batch) -> Result<(f64, Vec<Tensor>)> {
        let mut g = Graph::new().with_precision(self.cfg.precision);
        let p = self.model.params().bind(&mut g);
        let logits = self
            .model
            .forward(&mut g, &p, &batch.inputs, self.cfg.memory_rows(), self.cfg.mode)?;
        let v = self.model.spec().vocab();
        let flat = g.reshape(logits, &[batch.targets.len(), v])?;
        let loss = g.cross_entropy(flat, &batch.targets, &batch.mask)?;
        let grads = g.backward(loss)?;
        let gs = p
            .vars()
            .iter()
            .zip(self.model.params().iter())
            .map(|(&var, (_, t))| grads.get_or_zeros(var, t))
            .collect();
        Ok((g.value(loss).item(), gs))
    }

    /// One Adam step on a given batch.
    pub fn step_batch(&mut self, batch: &Batch) -> Result<StepInfo> {
        let (loss, mut grads) = self.loss_and_grads(batch)?;
        let grad_inf = grads.iter().map(Tensor::max_abs).fold(0.0, f64::max);
        if !loss.is_finite() || !grad_inf.is_finite() {
            return Err(HarnessError::NumericalAbort {
                iteration: self.iter + 1,
                reason: format!("loss {loss}, gradient infinity norm {grad_inf}"),
                dump: serde_json::to_string(batch)?,
            });
        }
        if let Some(clip) = self.cfg.grad_clip {
            let norm = grads.iter().map(|t| t.data().iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt();
            if norm > clip {
                for t in &mut grads {
                    for v in t.data_mut() {
                        *v *= clip / norm;
                    }
                }
            }
        }
        self.adam.update(self.model.params_mut(), &grads);
        self.iter += 1;
        if self.stop.observe(grad_inf) {
            self.stopped_early = true;
        }
        Ok(StepInfo { loss, grad_inf })
    }

    /// Samples a batch and steps on it.
    pub fn step(&mut self) -> Result<IterLog> {
        let (len, batch) = self.sample_batch()?;
        let info = self.step_batch(&batch)?;
        let entry = IterLog {
            iter: self.iter,
            len,
            loss: info.loss,
            grad_inf: info.grad_inf,
        };
        if self.iter.is_multiple_of(self.cfg.log_every) || self.iter == 1 || self.done() {
            self.log.push(entry);
        }
        Ok(entry)
    }

    /// Steps until the iteration budget is spent or early stopping fires.
    pub fn run(&mut self) -> Result<()> {
        while !self.done() {
            self.step()?;
        }
        Ok(())
    }
}

/// Trains a fresh model from `cfg` to completion.
pub fn train(cfg: &TrainConfig) -> Result<Trainer> {
    let mut t = Trainer::new(cfg.clone())?;
    t.run()?;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::Task;

    fn small(task: Task) -> TrainConfig {
        TrainConfig {
            task,
            batch_size: 4,
            min_len: 3,
            max_len: 5,
            max_iters: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn batch_padding_and_mask() {
        let items = vec![
            TaskInstance {
                task: Task::BinaryAdd,
                input: "1+1".into(),
                target: "01".into(),
            },
            TaskInstance {
                task: Task::BinaryAdd,
                input: "0+0".into(),
                target: "0".into(),
            },
        ];
        let b = Batch::from_instances(&items).unwrap();
        assert_eq!(b.len(), 6);
        assert_eq!(b.mask, vec![0., 0., 0., 1., 1., 1., 0., 0., 0., 1., 1., 0.]);
        let vocab = Task::BinaryAdd.vocab();
        assert_eq!(vocab.decode(&b.inputs[1]).unwrap(), "0+0|0$");
        assert_eq!(vocab.decode(&b.targets[6..]).unwrap(), "+0|0$$");
    }

    #[test]
    fn zero_mask_means_zero_gradient_and_early_stop() {
        let mut cfg = small(Task::Parity);
        cfg.max_iters = 10_000;
        let mut t = Trainer::new(cfg).unwrap();
        let (_, mut batch) = t.sample_batch().unwrap();
        batch.mask.iter_mut().for_each(|m| *m = 0.0);
        let before = t.model.params().clone();
        let mut steps = 0;
        while !t.done() {
            let info = t.step_batch(&batch).unwrap();
            assert_eq!(info.loss, 0.0);
            assert_eq!(info.grad_inf, 0.0);
            steps += 1;
        }
        assert_eq!(steps, 500);
        assert!(t.stopped_early);
        for ((_, a), (_, b)) in before.iter().zip(t.model.params().iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn one_hot_correct_logits_give_near_zero_loss() {
        let targets = [2usize, 0, 1];
        let mut logits = Tensor::zeros(&[3, 4]);
        for (r, &t) in targets.iter().enumerate() {
            logits.data_mut()[r * 4 + t] = 50.0;
        }
        let loss = crate::numeric::kernels::cross_entropy(&logits, &targets, &[1.0, 1.0, 1.0]).unwrap();
        assert!(loss < 1e-20);
    }

    #[test]
    fn early_stop_needs_consecutive_quiet_steps() {
        let mut stop = EarlyStop::new(3, 1e-8);
        assert!(!stop.observe(0.0));
        assert!(!stop.observe(0.0));
        assert!(!stop.observe(1.0));
        assert!(!stop.observe(0.0));
        assert!(!stop.observe(5e-9));
        assert!(stop.observe(0.0));
    }

    #[test]
    fn short_runs_are_finite_and_deterministic() {
        for arch in [super::super::config::Arch::Pntm, super::super::config::Arch::Ntm] {
            let cfg = TrainConfig { arch, ..small(Task::Cycle) };
            let a = train(&cfg).unwrap();
            let b = train(&cfg).unwrap();
            assert_eq!(a.iter, 3);
            assert!(a.log.iter().all(|l| l.loss.is_finite() && l.loss > 0.0));
            assert_eq!(a.log, b.log);
        }
    }
}
