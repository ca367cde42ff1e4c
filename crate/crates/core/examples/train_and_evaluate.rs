//! Trains a small model briefly, saves and reloads the checkpoint, then runs
//! greedy evaluation on longer inputs.
//!
//! `cargo run --release --example train_and_evaluate -- [task] [iters] [pntm|ntm]`

use pntm_core::harness::{evaluate, Arch, Checkpoint, EvalConfig, Trainer, TrainConfig};
use pntm_core::tasks::Task;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let task: Task = args.first().map_or("cycle", String::as_str).parse()?;
    let iters: usize = args.get(1).map_or(Ok(300), |s| s.parse())?;
    let arch = match args.get(2).map(String::as_str) {
        Some("ntm") => Arch::Ntm,
        _ => Arch::Pntm,
    };
    let cfg = TrainConfig {
        task,
        arch,
        max_iters: iters,
        batch_size: 16,
        min_len: 1,
        max_len: 10,
        log_every: 50,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(cfg)?;
    while !trainer.done() {
        let log = trainer.step()?;
        if log.iter % 50 == 0 {
            println!("iter {:>5}  len {:>2}  loss {:.4}", log.iter, log.len, log.loss);
        }
    }

    let path = std::env::temp_dir().join(format!("{task}.ckpt"));
    Checkpoint {
        task,
        train: Some(trainer.cfg.clone()),
        model: trainer.model,
    }
    .save(&path)?;
    let ck = Checkpoint::load(&path)?;
    println!("checkpoint {} ({} parameters)", path.display(), ck.model.params().count());

    let eval = EvalConfig {
        samples: 32,
        memory: ck.model.spec().memory(),
        ..EvalConfig::new(task, 5, 20)
    };
    let rep = evaluate(&ck.model, &eval)?;
    for l in &rep.lengths {
        println!("len {:>3}  accuracy {:.3}", l.len, l.accuracy);
    }
    println!("mean {:.3}  min {:.3}", rep.mean_accuracy, rep.min_accuracy);
    Ok(())
}
