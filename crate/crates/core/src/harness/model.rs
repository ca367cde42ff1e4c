use serde::{Deserialize, Serialize};

use super::config::{Arch, Preset, TrainConfig};
use super::Result;
use crate::numeric::{Bound, Graph, ParamSet, Tensor, Var};
use crate::ntm::{NtmModel, NtmModelConfig, NtmState};
use crate::pntm::{ExecMode, ModelState, PntmModel, PntmModelConfig};
use crate::tasks::Task;

/// Architecture and widths of a token model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "lowercase")]
pub enum ModelSpec {
    Pntm(PntmModelConfig),
    Ntm(NtmModelConfig),
}

impl ModelSpec {
    pub fn new(arch: Arch, preset: Preset, vocab: usize) -> Self {
        match (arch, preset) {
            (Arch::Pntm, Preset::Paper) => ModelSpec::Pntm(PntmModelConfig::paper(vocab)),
            (Arch::Pntm, Preset::Desk) => ModelSpec::Pntm(PntmModelConfig::desk(vocab)),
            (Arch::Ntm, Preset::Paper) => ModelSpec::Ntm(NtmModelConfig::paper(vocab)),
            (Arch::Ntm, Preset::Desk) => ModelSpec::Ntm(NtmModelConfig::desk(vocab)),
        }
    }

    /// Spec for a training run: preset widths, task vocabulary, training
    /// memory size and the precision floor.
    pub fn for_training(cfg: &TrainConfig) -> Self {
        let mut spec = ModelSpec::new(cfg.arch, cfg.preset, cfg.task.vocab().len());
        match &mut spec {
            ModelSpec::Pntm(c) => {
                c.layer.m = cfg.memory_rows();
                c.layer.epsilon = cfg.precision.epsilon();
            }
            ModelSpec::Ntm(c) => c.m = cfg.memory_rows(),
        }
        spec
    }

    pub fn vocab(&self) -> usize {
        match self {
            ModelSpec::Pntm(c) => c.vocab,
            ModelSpec::Ntm(c) => c.vocab,
        }
    }

    pub fn memory(&self) -> usize {
        match self {
            ModelSpec::Pntm(c) => c.layer.m,
            ModelSpec::Ntm(c) => c.m,
        }
    }

    pub fn build(&self, seed: u64) -> Result<Model> {
        Ok(match self {
            ModelSpec::Pntm(c) => Model::Pntm(PntmModel::new(c.clone(), seed)?),
            ModelSpec::Ntm(c) => Model::Ntm(NtmModel::new(c.clone(), seed)?),
        })
    }
}

/// Step-by-step greedy decoding interface.
pub trait Decoder {
    type State;

    fn vocab_size(&self) -> usize;

    fn start(&self, batch: usize, m: usize) -> Self::State;

    /// Feeds one token per sequence and returns logits `[B, vocab]`.
    fn step(&self, state: &mut Self::State, tokens: &[usize], tau: Option<f64>) -> Result<Tensor>;
}

#[derive(Debug, Clone)]
pub enum Model {
    Pntm(PntmModel),
    Ntm(NtmModel),
}

#[derive(Debug, Clone)]
pub enum DecodeState {
    Pntm(ModelState),
    Ntm(NtmState),
}

impl Model {
    pub fn spec(&self) -> ModelSpec {
        match self {
            Model::Pntm(m) => ModelSpec::Pntm(m.cfg.clone()),
            Model::Ntm(m) => ModelSpec::Ntm(m.cfg.clone()),
        }
    }

    pub fn params(&self) -> &ParamSet {
        match self {
            Model::Pntm(m) => m.params(),
            Model::Ntm(m) => m.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        match self {
            Model::Pntm(m) => m.params_mut(),
            Model::Ntm(m) => m.params_mut(),
        }
    }

    /// Teacher-forced logits `[B, T, vocab]`; `mode` only affects the
    /// memory layer of the parallel model.
    pub fn forward(&self, g: &mut Graph, p: &Bound, tokens: &[Vec<usize>], m: usize, mode: ExecMode) -> Result<Var> {
        Ok(match self {
            Model::Pntm(model) => model.forward(g, p, tokens, m, mode)?,
            Model::Ntm(model) => model.forward(g, p, tokens, m)?,
        })
    }

    pub fn task_matches(&self, task: Task) -> bool {
        self.spec().vocab() == task.vocab().len()
    }
}

impl Decoder for Model {
    type State = DecodeState;

    fn vocab_size(&self) -> usize {
        self.spec().vocab()
    }

    fn start(&self, batch: usize, m: usize) -> DecodeState {
        match self {
            Model::Pntm(model) => DecodeState::Pntm(model.start(batch, m)),
            Model::Ntm(model) => DecodeState::Ntm(model.start(batch, m)),
        }
    }

    fn step(&self, state: &mut DecodeState, tokens: &[usize], tau: Option<f64>) -> Result<Tensor> {
        Ok(match (self, state) {
            (Model::Pntm(model), DecodeState::Pntm(s)) => model.step(s, tokens, tau)?,
            (Model::Ntm(model), DecodeState::Ntm(s)) => model.step(s, tokens)?,
            _ => unreachable!("decode state built by a different architecture"),
        })
    }
}
