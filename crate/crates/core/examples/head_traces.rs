//! Dumps per-head address and read/write traces of an untrained model for one
//! input, as CSV files.
//!
//! `cargo run --example head_traces -- [input] [out_dir]`

use pntm_core::harness::inspect;
use pntm_core::pntm::{PntmModel, PntmModelConfig};
use pntm_core::tasks::Task;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let input = args.first().map_or("aabba", String::as_str);
    let out = std::path::PathBuf::from(args.get(1).map_or("traces", String::as_str));
    let task = Task::Reverse;
    let model = PntmModel::new(PntmModelConfig::desk(task.vocab().len()), 0)?;
    let summary = inspect(&model, task, input, &out, Some(0.01), None)?;
    println!("fed {:?} in {} steps over {} cells", summary.tokens, summary.steps, summary.memory);
    for f in &summary.files {
        println!("  {}", f.display());
    }
    Ok(())
}
