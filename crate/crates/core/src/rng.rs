//! Seed derivation and deterministic random streams.
//!
//! Every experiment takes one `base_seed` and derives an isolated ChaCha8
//! stream per unit of work (one Monte-Carlo trial, one packet episode) by
//! mixing the base seed with the unit's coordinates. Derived streams never
//! share state, so trials can be replayed in isolation and run in any
//! order without changing a single drawn number.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One round of the splitmix64 output function (Steele, Lea & Flood's
/// generator as published in the public-domain reference code). Used both
/// for seed derivation and to spread packet digests over Bloom positions.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a sequence of tag words into `base` with splitmix64 rounds.
///
/// The result is stable across platforms and releases; it is recorded in
/// experiment output so any single trial can be replayed from its seed
/// alone.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix64(base);
    for &t in tags {
        h = splitmix64(h ^ t);
    }
    h
}

/// ChaCha8 stream for a single derived seed.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream for one trial of one sweep cell, keyed by the cell coordinates.
pub fn trial_seed(base_seed: u64, hop_count: u32, p: f64, trial: u32) -> u64 {
    derive_seed(base_seed, &[u64::from(hop_count), p.to_bits(), u64::from(trial)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn splitmix_reference_values() {
        // First three outputs of the reference implementation seeded with 0,
        // whose internal state advances by the golden constant per call.
        const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
        assert_eq!(splitmix64(0), 0xe220_a839_7b1d_cdaf);
        assert_eq!(splitmix64(GOLDEN), 0x6e78_9e6a_a1b9_65f4);
        assert_eq!(splitmix64(GOLDEN.wrapping_mul(2)), 0x06c4_5d18_8009_454f);
    }

    #[test]
    fn derived_streams_are_reproducible_and_distinct() {
        let a1 = stream(trial_seed(7, 3, 0.2, 0)).next_u64();
        let a2 = stream(trial_seed(7, 3, 0.2, 0)).next_u64();
        let b = stream(trial_seed(7, 3, 0.2, 1)).next_u64();
        let c = stream(trial_seed(7, 3, 0.25, 0)).next_u64();
        assert_eq!(a1, a2);
        assert_ne!(a1, b);
        assert_ne!(a1, c);
    }
}
