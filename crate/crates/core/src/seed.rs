//! Splittable seeding: every stochastic step draws from its own stream,
//! derived from the master seed through a 64-bit mix.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for sub-stream `(purpose, index)` of `master`.
pub fn split_seed(master: u64, purpose: u64, index: u64) -> u64 {
    mix(mix(mix(master) ^ purpose) ^ index)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream identifiers, kept distinct so no two steps share draws.
pub mod purpose {
    pub const REPLICATION: u64 = 1;
    pub const MASK: u64 = 2;
    pub const STATISTICS: u64 = 3;
    pub const DELTA_MU: u64 = 4;
    pub const BANDWIDTH: u64 = 5;
    pub const LABELS: u64 = 6;
    pub const EM: u64 = 7;
    pub const ORACLE: u64 = 8;
    pub const BENCH: u64 = 9;
}
