//! Seeded random streams.
//!
//! Every stochastic component draws from its own ChaCha stream derived from a
//! master seed and a stream label, so adding a consumer never perturbs the
//! numbers seen by another one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derive an independent seed for the named stream.
pub fn derive_seed(master: u64, stream: &str) -> u64 {
    stream
        .bytes()
        .fold(mix(master), |acc, b| mix(acc ^ u64::from(b)))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(master: u64, name: &str) -> SimRng {
    rng_from_seed(derive_seed(master, name))
}
