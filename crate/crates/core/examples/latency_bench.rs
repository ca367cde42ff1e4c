//! Times the baseline and both execution modes of the memory layer over
//! growing sequence lengths.
//!
//! `cargo run --release --example latency_bench -- [max_exp] [bench.csv]`

use pntm_core::harness::{bench, BenchConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let max_exp: u32 = args.first().map_or(Ok(9), |s| s.parse())?;
    let cfg = BenchConfig {
        min_exp: 3,
        max_exp,
        warmup: 1,
        runs: 3,
        ..BenchConfig::default()
    };
    let res = bench(&cfg, |row| {
        let f = |v: Option<f64>| v.map_or("skipped".into(), |v| format!("{v:.4}s"));
        println!(
            "len {:>6}  ntm {:>9}  sequential {:>9}  parallel {:>9}",
            row.len,
            f(row.ntm_mean),
            f(row.seq_mean),
            f(row.par_mean)
        );
    })?;
    println!(
        "{} threads, chunk {}, parameters ntm {} / pntm {}",
        res.threads, res.chunk_len, res.ntm_params, res.pntm_params
    );
    if let Some(path) = args.get(1) {
        res.write_csv(std::fs::File::create(path)?)?;
    }
    Ok(())
}
