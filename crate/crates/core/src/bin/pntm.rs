use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pntm_core::harness::{
    self, bench, evaluate, inspect, BenchConfig, Checkpoint, EvalConfig, HarnessError, Model, Trainer, TrainConfig,
};
use pntm_core::tasks::{generate_corpus, save_jsonl, Task};

#[derive(Parser)]
#[command(name = "pntm", version, about = "Memory-augmented sequence models: tasks, training, evaluation, benchmarks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a JSONL corpus of task instances.
    Taskgen {
        #[arg(long)]
        task: Task,
        #[arg(long)]
        len: usize,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model from a JSON config and save a checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy exact-match evaluation over a range of lengths.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        min_len: usize,
        #[arg(long)]
        max_len: usize,
        #[arg(long, default_value_t = 128)]
        samples: usize,
        /// Shift threshold; 0 disables it.
        #[arg(long, default_value_t = 0.01)]
        tau: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: PathBuf,
    },
    /// Time the baseline and both execution paths over lengths 2^min..2^max.
    Bench {
        #[arg(long, default_value_t = 3)]
        min_exp: u32,
        #[arg(long, default_value_t = 13)]
        max_exp: u32,
        #[arg(long, default_value_t = 8)]
        batch: usize,
        #[arg(long, default_value_t = 128)]
        dim: usize,
        #[arg(long, default_value_t = 512)]
        mem: usize,
        #[arg(long, default_value_t = 3)]
        warmup: usize,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        /// Skip timing the NTM baseline.
        #[arg(long)]
        no_baseline: bool,
        /// CSV output; a JSON copy is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump per-head addressing and read/write traces as CSV.
    Inspect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: String,
        #[arg(long, default_value_t = 0.01)]
        tau: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn tau_opt(tau: f64) -> Option<f64> {
    (tau > 0.0).then_some(tau)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> harness::Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

fn run(cmd: Cmd) -> harness::Result<()> {
    match cmd {
        Cmd::Taskgen {
            task,
            len,
            count,
            seed,
            out,
        } => {
            let items = generate_corpus(task, len, count, seed)?;
            save_jsonl(&out, &items)?;
            eprintln!("wrote {} {task} instances to {}", items.len(), out.display());
        }
        Cmd::Train { config, out } => {
            let cfg = TrainConfig::from_json(&std::fs::read_to_string(&config)?)?;
            let mut trainer = Trainer::new(cfg)?;
            let metrics_path = with_suffix(&out, ".metrics.jsonl");
            let mut metrics = std::io::BufWriter::new(std::fs::File::create(&metrics_path)?);
            let head = serde_json::json!({
                "config": trainer.cfg,
                "parameters": trainer.model.params().count(),
                "seed_derivation": "splitmix64",
            });
            writeln!(metrics, "{head}")?;
            let mut logged = 0;
            while !trainer.done() {
                if let Err(e) = trainer.step() {
                    if let HarnessError::NumericalAbort { dump, .. } = &e {
                        let dump_path = with_suffix(&out, ".abort.json");
                        std::fs::write(&dump_path, dump)?;
                        eprintln!("offending batch written to {}", dump_path.display());
                    }
                    return Err(e);
                }
                for entry in &trainer.log[logged..] {
                    writeln!(metrics, "{}", serde_json::to_string(entry)?)?;
                    eprintln!(
                        "iter {:>7}  len {:>3}  loss {:.6}  |grad|inf {:.3e}",
                        entry.iter, entry.len, entry.loss, entry.grad_inf
                    );
                }
                logged = trainer.log.len();
            }
            metrics.flush()?;
            let task = trainer.cfg.task;
            Checkpoint {
                task,
                train: Some(trainer.cfg.clone()),
                model: trainer.model,
            }
            .save(&out)?;
            eprintln!(
                "saved {} after {} iterations{}",
                out.display(),
                trainer.iter,
                if trainer.stopped_early { " (early stop)" } else { "" }
            );
        }
        Cmd::Eval {
            model,
            min_len,
            max_len,
            samples,
            tau,
            seed,
            report,
        } => {
            let ck = Checkpoint::load(&model)?;
            let cfg = EvalConfig {
                samples,
                tau: tau_opt(tau),
                seed,
                memory: ck.model.spec().memory(),
                ..EvalConfig::new(ck.task, min_len, max_len)
            };
            let rep = evaluate(&ck.model, &cfg)?;
            for l in &rep.lengths {
                eprintln!("len {:>4}  accuracy {:.4}  cap hits {}", l.len, l.accuracy, l.cap_hits);
            }
            eprintln!("mean {:.4}  max {:.4}", rep.mean_accuracy, rep.max_accuracy);
            write_json(&report, &rep)?;
        }
        Cmd::Bench {
            min_exp,
            max_exp,
            batch,
            dim,
            mem,
            warmup,
            runs,
            no_baseline,
            out,
        } => {
            let cfg = BenchConfig {
                min_exp,
                max_exp,
                batch,
                dim,
                mem,
                warmup,
                runs,
                baseline: !no_baseline,
                ..BenchConfig::default()
            };
            let res = bench(&cfg, |row| {
                let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
                eprintln!(
                    "len {:>6}  ntm {}s  seq {}s  par {}s  speedup {}",
                    row.len,
                    fmt(row.ntm_mean),
                    fmt(row.seq_mean),
                    fmt(row.par_mean),
                    fmt(row.speedup_par_vs_seq)
                );
            })?;
            res.write_csv(std::fs::File::create(&out)?)?;
            write_json(&out.with_extension("json"), &res)?;
        }
        Cmd::Inspect { model, input, tau, out } => {
            let ck = Checkpoint::load(&model)?;
            let Model::Pntm(m) = &ck.model else {
                return Err(HarnessError::Config("inspect needs a P-NTM checkpoint".into()));
            };
            let summary = inspect(m, ck.task, &input, &out, tau_opt(tau), None)?;
            eprintln!(
                "{} steps over {} memory rows: {}",
                summary.steps, summary.memory, summary.tokens
            );
            write_json(&out.join("summary.json"), &summary)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                HarnessError::NumericalAbort { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
