//! Trains the small model on one task and checks length generalisation.
//!
//! `cargo run --release --example desk_learning -- [task] [seed] [iters] [batch] [out.ckpt]`

use std::time::Instant;

use pntm_core::harness::{evaluate, Checkpoint, EvalConfig, Trainer, TrainConfig};
use pntm_core::tasks::Task;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let task: Task = args.first().map_or("parity", String::as_str).parse()?;
    let seed: u64 = args.get(1).map_or(Ok(0), |s| s.parse())?;
    let iters: usize = args.get(2).map_or(Ok(20_000), |s| s.parse())?;
    let batch: usize = args.get(3).map_or(Ok(32), |s| s.parse())?;
    let out = args.get(4);
    let cfg = TrainConfig {
        task,
        seed,
        max_iters: iters,
        batch_size: batch,
        min_len: 1,
        max_len: 10,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(cfg)?;
    let memory = trainer.cfg.memory_rows();
    let quick = EvalConfig {
        samples: 32,
        memory,
        ..EvalConfig::new(task, 11, 30)
    };
    let t0 = Instant::now();
    let mut loss = 0.0;
    while !trainer.done() {
        loss += trainer.step()?.loss;
        if trainer.iter % 250 == 0 {
            let rep = evaluate(&trainer.model, &quick)?;
            println!(
                "iter {:>6}  loss {:.4}  held-out mean {:.3} min {:.3}  {:.0}s",
                trainer.iter,
                loss / 250.0,
                rep.mean_accuracy,
                rep.min_accuracy,
                t0.elapsed().as_secs_f64()
            );
            loss = 0.0;
            if rep.min_accuracy == 1.0 {
                let full = evaluate(&trainer.model, &EvalConfig { samples: 128, ..quick.clone() })?;
                println!("full check: min {:.4}", full.min_accuracy);
                if full.min_accuracy == 1.0 {
                    break;
                }
            }
        }
    }
    if let Some(path) = out {
        Checkpoint {
            task,
            train: Some(trainer.cfg.clone()),
            model: trainer.model,
        }
        .save(std::path::Path::new(path))?;
    }
    Ok(())
}
