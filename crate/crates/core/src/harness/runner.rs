use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::eval::{evaluate, EvalConfig, EvalReport};
use super::train::Trainer;
use super::Result;
use crate::seeds::derive_seeds;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seed: u64,
    pub iterations: usize,
    pub stopped_early: bool,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSeedReport {
    /// How seeds were derived from the base.
    pub derivation: String,
    pub base_seed: u64,
    pub runs: Vec<SeedRun>,
    /// Mean accuracy over the evaluation lengths, per run.
    pub accuracies: Vec<f64>,
    pub max_accuracy: f64,
}

/// Independent trainings on derived seeds, each evaluated on `eval`.
/// When `stop_at` is set, runs stop after the first seed whose mean
/// accuracy reaches it.
pub fn run_seeds(
    train: &TrainConfig,
    eval: &EvalConfig,
    base: u64,
    count: usize,
    stop_at: Option<f64>,
) -> Result<MultiSeedReport> {
    let mut runs = Vec::new();
    for seed in derive_seeds(base, count) {
        let mut t = Trainer::new(TrainConfig { seed, ..train.clone() })?;
        t.run()?;
        let report = evaluate(
            &t.model,
            &EvalConfig {
                memory: t.cfg.memory_rows(),
                ..eval.clone()
            },
        )?;
        let hit = stop_at.is_some_and(|s| report.mean_accuracy >= s);
        runs.push(SeedRun {
            seed,
            iterations: t.iter,
            stopped_early: t.stopped_early,
            report,
        });
        if hit {
            break;
        }
    }
    let accuracies: Vec<f64> = runs.iter().map(|r| r.report.mean_accuracy).collect();
    Ok(MultiSeedReport {
        derivation: "splitmix64 outputs from the base seed".into(),
        base_seed: base,
        max_accuracy: accuracies.iter().copied().fold(0.0, f64::max),
        accuracies,
        runs,
    })
}
