//! Training, evaluation, benchmarking, inspection and persistence.

pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod inspect;
pub mod model;
pub mod runner;
pub mod train;

pub use bench::{bench, BenchConfig, BenchResult, BenchRow};
pub use checkpoint::Checkpoint;
pub use config::{Arch, Preset, TrainConfig};
pub use eval::{evaluate, greedy_decode, EvalConfig, EvalReport, LengthResult};
pub use inspect::{inspect, InspectSummary};
pub use model::{DecodeState, Decoder, Model, ModelSpec};
pub use runner::{run_seeds, MultiSeedReport, SeedRun};
pub use train::{train, Adam, Batch, EarlyStop, IterLog, Trainer};

pub use crate::seeds::derive_seeds as seeds;

use thiserror::Error;

use crate::ntm::NtmError;
use crate::numeric::NumericError;
use crate::pntm::PntmError;
use crate::tasks::{Task, TaskError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("model vocabulary of {model} tokens does not fit task {task}")]
    VocabMismatch { task: Task, model: usize },
    #[error("numerical abort at iteration {iteration}: {reason}")]
    NumericalAbort {
        iteration: usize,
        reason: String,
        /// JSON of the offending batch.
        dump: String,
    },
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Pntm(#[from] PntmError),
    #[error(transparent)]
    Ntm(#[from] NtmError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;
