//! Scan-parallel memory layer, the minGRU front block and the token model
//! that stacks them.

mod blocks;
mod layer;
mod mingru;
mod model;

pub use blocks::{FeedForward, RmsNorm};
pub use layer::{Control, PntmLayer, PntmState, PntmStateVars, StepOut};
pub use mingru::MinGru;
pub use model::{ModelState, PntmModel, PntmModelConfig, StepTrace};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addressing::AddressingError;
use crate::memory::MemoryError;
use crate::numeric::NumericError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PntmError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Addressing(#[from] AddressingError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

pub type Result<T> = std::result::Result<T, PntmError>;

/// How a sequence is pushed through the layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

/// Hyperparameters of one memory layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PntmConfig {
    /// Model width.
    pub d: usize,
    /// Cell width.
    pub n: usize,
    /// Memory rows.
    pub m: usize,
    /// Read/write head pairs.
    pub heads: usize,
    /// Inference threshold for shift strengths.
    pub tau: f64,
    pub mode: ExecMode,
    pub epsilon: f64,
}

impl Default for PntmConfig {
    fn default() -> Self {
        PntmConfig {
            d: 32,
            n: 16,
            m: 36,
            heads: 2,
            tau: 0.01,
            mode: ExecMode::Parallel,
            epsilon: 1e-12,
        }
    }
}

impl PntmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 || self.heads == 0 {
            return Err(PntmError::Config("widths and head count must be positive".into()));
        }
        if !self.n.is_multiple_of(self.heads) {
            return Err(PntmError::Config(format!(
                "{} heads cannot evenly partition cell width {}",
                self.heads, self.n
            )));
        }
        if self.m < 3 {
            return Err(PntmError::Config(format!("memory needs at least 3 rows, got {}", self.m)));
        }
        if !(0.0..1.0).contains(&self.tau) {
            return Err(PntmError::Config(format!("tau {} outside [0, 1)", self.tau)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(PntmError::Config(format!("epsilon {} outside (0, 0.5)", self.epsilon)));
        }
        Ok(())
    }
}
