use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};
use crate::numeric::Precision;
use crate::pntm::ExecMode;
use crate::tasks::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    #[default]
    Pntm,
    Ntm,
}

/// Model widths to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Paper,
    #[default]
    Desk,
}

/// Training run settings. Every field has a default so a config file only
/// needs the fields it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub task: Task,
    pub arch: Arch,
    pub preset: Preset,
    pub precision: Precision,
    /// Execution path of the memory layer during training.
    pub mode: ExecMode,
    pub max_iters: usize,
    pub batch_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Stop once the gradient infinity norm stays below `early_stop_threshold`
    /// for this many consecutive iterations.
    pub early_stop_window: usize,
    pub early_stop_threshold: f64,
    /// Global-norm gradient clipping; off when absent.
    pub grad_clip: Option<f64>,
    /// Memory rows during training; `2·max_len + 16` when absent.
    pub memory: Option<usize>,
    pub seed: u64,
    /// Record one metrics line every this many iterations.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            task: Task::Parity,
            arch: Arch::Pntm,
            preset: Preset::Desk,
            precision: Precision::F64,
            mode: ExecMode::Parallel,
            max_iters: 500_000,
            batch_size: 128,
            min_len: 1,
            max_len: 40,
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            early_stop_window: 500,
            early_stop_threshold: 1e-8,
            grad_clip: None,
            memory: None,
            seed: 0,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.min_len < self.task.min_len() || self.min_len > self.max_len {
            return bad(format!(
                "length range [{}, {}] invalid for {} (minimum {})",
                self.min_len,
                self.max_len,
                self.task,
                self.task.min_len()
            ));
        }
        if self.max_iters == 0 || self.batch_size == 0 || self.early_stop_window == 0 || self.log_every == 0 {
            return bad("iteration, batch, window and logging counts must be positive".into());
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("learning rate must be positive and Adam betas in [0, 1)".into());
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive".into());
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return bad("grad_clip must be positive".into());
            }
        }
        if let Some(m) = self.memory {
            if m < 3 {
                return bad(format!("memory needs at least 3 rows, got {m}"));
            }
        }
        Ok(())
    }

    pub fn memory_rows(&self) -> usize {
        self.memory.unwrap_or_else(|| crate::memory::train_memory_size(self.max_len))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}
