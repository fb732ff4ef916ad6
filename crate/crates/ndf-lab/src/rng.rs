//! Seed derivation and the one PRNG family used everywhere.
//!
//! Every random draw in this crate flows from an explicit `u64` seed through
//! [`ChaCha8Rng`]. Sub-streams (per-episode shuffles, per-run model inits,
//! strategy sampling) are derived with [`derive_seed`], a SplitMix64 mix of
//! `(base, stream, index)`, so two processes given the same config produce
//! identical draws in identical order.

use rand_chacha::rand_core::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Named sub-stream tags. Keeping them in one place makes collisions
/// impossible to introduce by accident.
pub mod streams {
    pub const MODEL_INIT: u64 = 1;
    pub const POLICY_INIT: u64 = 2;
    pub const EPISODE_SHUFFLE: u64 = 3;
    pub const APPLY_SHUFFLE: u64 = 4;
    pub const POLICY_SAMPLE: u64 = 5;
    pub const STRATEGY: u64 = 6;
    pub const BLOB_CENTERS: u64 = 7;
    pub const BLOB_POINTS: u64 = 8;
    pub const SPLIT: u64 = 9;
    pub const SUBSET: u64 = 10;
    pub const RUN: u64 = 11;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `(base, stream, index)`.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let a = splitmix64(base.wrapping_add(splitmix64(stream)));
    splitmix64(a.wrapping_add(splitmix64(index)))
}

/// Constructs the crate's standard generator from a seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_seed_is_deterministic_and_spreads() {
        assert_eq!(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
        assert_ne!(derive_seed(1, 2, 3), derive_seed(1, 2, 4));
        assert_ne!(derive_seed(1, 2, 3), derive_seed(1, 3, 3));
        assert_ne!(derive_seed(1, 2, 3), derive_seed(2, 2, 3));
    }

    #[test]
    fn rng_streams_repeat() {
        use rand::Rng;
        let mut a = rng_from_seed(derive_seed(7, streams::STRATEGY, 0));
        let mut b = rng_from_seed(derive_seed(7, streams::STRATEGY, 0));
        for _ in 0..16 {
            assert_eq!(a.gen::<u64>(), b.gen::<u64>());
        }
    }
}
