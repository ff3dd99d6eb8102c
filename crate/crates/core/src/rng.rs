//! Seed derivation.
//!
//! Every random draw in the crate comes from a single `u64` seed. Independent
//! streams are derived by hashing `(seed, stream)` with SplitMix64, so a
//! trial, shard or instance can be regenerated in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed for `stream` from `seed`.
pub fn derive(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Generator for the given seed.
pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for a derived stream.
pub fn stream(seed: u64, stream: u64) -> Rng {
    rng(derive(seed, stream))
}
