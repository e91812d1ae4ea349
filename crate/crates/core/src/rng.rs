//! Seeded random sources.
//!
//! Every stochastic component draws from [`SimRng`]. Independent streams
//! (per shard, per mining distance, per scenario subsystem) are derived from
//! a parent seed with [`derive_seed`], so results never depend on how work is
//! split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// SplitMix64 finalizer over `(seed, stream)`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derived_rng(seed: u64, stream: u64) -> SimRng {
    rng_from_seed(derive_seed(seed, stream))
}
