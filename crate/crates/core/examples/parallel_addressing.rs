//! Computes head addresses for a long run of shifts in one parallel pass and
//! compares them with stepping the circular convolution one shift at a time.
//!
//! `cargo run --release --example parallel_addressing -- [steps] [memory]`

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pntm_core::addressing::{conv_shift, shift_sequential, AddressWeights, ShiftVector};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps: usize = args.first().map_or(Ok(4096), |s| s.parse())?;
    let m: usize = args.get(1).map_or(Ok(96), |s| s.parse())?;

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let shifts: Vec<ShiftVector> = (0..steps)
        .map(|_| ShiftVector::from_logits([0, 1, 2].map(|_| rng.random_range(-4.0..4.0))))
        .collect();

    let t0 = Instant::now();
    let parallel = conv_shift(&shifts, m, 1e-12)?;
    let t_par = t0.elapsed();

    let t0 = Instant::now();
    let mut a = AddressWeights::initial(m);
    let mut worst: f64 = 0.0;
    for (s, p) in shifts.iter().zip(&parallel) {
        worst = a
            .as_slice()
            .iter()
            .zip(p.as_slice())
            .fold(worst, |w, (x, y)| w.max((x - y).abs()));
        a = shift_sequential(&a, s)?;
    }
    let t_seq = t0.elapsed();

    println!("{steps} shifts over {m} cells");
    println!("parallel   {t_par:?}");
    println!("sequential {t_seq:?}");
    println!("max abs difference {worst:.3e}");
    println!("final address mass {:.12}", parallel[steps].sum());
    Ok(())
}
