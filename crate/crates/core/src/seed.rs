//! Seed splitting.
//!
//! Every random stream in the crate is derived from a root seed and a path of
//! stream labels: `derive(seed, &[a, b, ...])` folds each label into the state
//! with one SplitMix64 round. Distinct label paths give statistically
//! independent streams, so workers can generate records or initialise
//! networks concurrently without sharing an RNG.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a sub-seed from `seed` along `path`.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &label| splitmix64(acc ^ label.wrapping_mul(GOLDEN)))
}

pub fn rng(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, path))
}

/// Stream labels used across the crate.
pub mod stream {
    pub const RECORD: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const ENCODER: u64 = 3;
    pub const DECODER: u64 = 4;
    pub const DISCRIMINATOR: u64 = 5;
    pub const SHUFFLE: u64 = 6;
    pub const MATERNAL: u64 = 7;
    pub const FETAL: u64 = 8;
    pub const HEART: u64 = 9;
    pub const RESPIRATION: u64 = 10;
    pub const PARAMS: u64 = 11;
}
