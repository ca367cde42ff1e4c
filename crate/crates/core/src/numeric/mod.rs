//! Dense tensor substrate: row-major `f64` tensors, a reverse-mode tape
//! ([`Graph`]), complex FFT helpers and the pure kernels both share.
//!
//! Complex-valued tensors inside the tape use an interleaved layout: a
//! trailing axis of extent 2 holding `(re, im)`.

mod fft;
mod graph;
pub mod kernels;
mod params;
mod tensor;

pub use fft::{fft, ifft, ComplexVector};
pub use graph::{Gradients, Graph, UnaryKind, Var};
pub use params::{Bound, ParamId, ParamSet};
pub use tensor::Tensor;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Working precision of a computation.
///
/// Storage is always `f64`; in `F32` mode every op result is rounded to the
/// nearest `f32` so the arithmetic behaves like single precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

impl Precision {
    /// Clamp floor used by log-space scans and the approximate complex log.
    pub fn epsilon(self) -> f64 {
        match self {
            Precision::F64 => 1e-12,
            Precision::F32 => 1e-6,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("invalid shape {shape:?} for {len} elements")]
    InvalidShape { shape: Vec<usize>, len: usize },
    #[error("{op}: axis {axis} out of range for rank {rank}")]
    AxisOutOfRange {
        op: &'static str,
        axis: usize,
        rank: usize,
    },
    #[error("backward root must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("log of non-positive value {0} (strict mode)")]
    NonPositiveLog(f64),
    #[error("{0}")]
    Domain(String),
}

pub type Result<T> = std::result::Result<T, NumericError>;
