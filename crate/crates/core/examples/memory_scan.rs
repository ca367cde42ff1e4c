//! Writes a stream of updates into memory with the log-space scan and checks
//! every intermediate memory against the step-by-step write.
//!
//! `cargo run --release --example memory_scan -- [steps]`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pntm_core::addressing::{conv_shift, ShiftVector};
use pntm_core::memory::{memory_write_parallel, read, write_sequential, MemoryMatrix};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let steps: usize = std::env::args().nth(1).map_or(Ok(256), |s| s.parse())?;
    let (m, n) = (32, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    // a head that mostly walks right, occasionally pausing
    let shifts: Vec<ShiftVector> = (0..steps - 1)
        .map(|_| {
            let stay = rng.random_range(0.0..0.3);
            ShiftVector::new(0.0, stay, 1.0 - stay)
        })
        .collect::<Result<_, _>>()?;
    let addrs = conv_shift(&shifts, m, 1e-12)?;
    let updates: Vec<Vec<f64>> = (0..steps)
        .map(|_| (0..n).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();

    let scanned = memory_write_parallel(&addrs[..steps], &updates, 1e-12)?;
    let mut mem = MemoryMatrix::zeros(m, n);
    let mut worst: f64 = 0.0;
    for (t, (a, u)) in addrs.iter().zip(&updates).enumerate() {
        mem = write_sequential(&mem, a, u)?;
        let rel = mem.as_tensor().max_abs_diff(scanned[t].as_tensor()) / mem.as_tensor().max_abs();
        worst = worst.max(rel);
    }
    println!("{steps} writes into {m}x{n} memory, max relative difference {worst:.3e}");
    let r = read(&mem, &addrs[steps - 1])?;
    println!("read at the last write address: {r:.4?}");
    Ok(())
}
