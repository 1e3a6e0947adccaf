//! Deterministic seed derivation.
//!
//! Every randomized computation in this crate draws from a `ChaCha8` stream
//! whose seed is derived from a user-supplied base seed and one or more
//! counters (replication index, retry attempt, block index). Derivation is a
//! SplitMix64 chain, so parallel and serial evaluation orders produce
//! identical streams and therefore identical results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer. Good avalanche, cheap, stateless.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a base seed and a counter.
pub fn derive_seed(base: u64, counter: u64) -> u64 {
    splitmix64(base ^ splitmix64(counter.wrapping_add(1)))
}

/// Derive a child seed from a base seed and two counters.
pub fn derive_seed2(base: u64, a: u64, b: u64) -> u64 {
    derive_seed(derive_seed(base, a), b)
}

/// A ChaCha8 stream for the given derived seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
