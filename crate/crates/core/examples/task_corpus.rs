//! Generates instances of every task, shows their token layout and writes a
//! JSONL corpus.
//!
//! `cargo run --example task_corpus -- [len] [out.jsonl]`

use pntm_core::tasks::{generate_corpus, save_jsonl, Task};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let len: usize = args.first().map_or(Ok(8), |s| s.parse())?;
    let out = args.get(1).map_or("corpus.jsonl", String::as_str);

    let mut all = Vec::new();
    for task in Task::ALL {
        let items = generate_corpus(task, len.max(task.min_len()), 3, 0)?;
        let (tokens, mask) = items[0].build_sequence()?;
        println!("{task:<10} vocab {:?}", task.symbols());
        for it in &items {
            println!("  {:<24} -> {}", it.input, it.target);
        }
        println!("  tokens {tokens:?}");
        println!("  mask   {:?}", mask.iter().map(|&m| m as u8).collect::<Vec<_>>());
        all.extend(items);
    }
    save_jsonl(std::path::Path::new(out), &all)?;
    println!("wrote {} instances to {out}", all.len());
    Ok(())
}
