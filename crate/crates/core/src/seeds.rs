//! Deterministic seed derivation.
//!
//! Every derived value is one splitmix64 step away from a mixed input, so
//! streams are stable across runs and platforms.

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// One splitmix64 output for state `x`.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `count` seeds: the splitmix64 sequence started at `base`.
pub fn derive_seeds(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64)
        .map(|i| splitmix64(base.wrapping_add(i.wrapping_mul(GAMMA))))
        .collect()
}

/// Folds `parts` into `base`, one splitmix64 step per part.
pub fn stream_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(base), |acc, &p| splitmix64(acc ^ p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        // first outputs of the canonical splitmix64 generator seeded with 0
        let s = derive_seeds(0, 3);
        assert_eq!(s[0], 0xe220_a839_7b1d_cdaf);
        assert_eq!(s[1], 0x6e78_9e6a_a1b9_65f4);
        assert_eq!(s[2], 0x06c4_5d18_8009_454f);
    }

    #[test]
    fn ten_distinct() {
        let mut s = derive_seeds(0, 10);
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 10);
        assert_eq!(derive_seeds(7, 5), derive_seeds(7, 5));
    }
}
