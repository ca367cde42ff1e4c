//! Memory-augmented sequence models whose head addressing and memory writes
//! run either step by step or as parallel scans over time.
//!
//! Layers, from the bottom: [`numeric`] (tensors, tape, FFT), [`scan`]
//! (prefix scans and log-space linear recurrences), [`addressing`] and
//! [`memory`] (shift addressing and memory writes in both forms), the
//! models in [`pntm`] and [`ntm`], the task generators in [`tasks`], and
//! training/evaluation tooling in [`harness`].

pub mod addressing;
pub mod harness;
pub mod memory;
pub mod ntm;
pub mod numeric;
pub mod pntm;
pub mod scan;
pub mod seeds;
pub mod tasks;
