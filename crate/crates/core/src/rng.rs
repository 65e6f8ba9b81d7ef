//! Deterministic seed derivation.
//!
//! Every random stream in the simulator is a `ChaCha8Rng` seeded from the
//! episode (or dataset) seed mixed with a stream tag, so subsystems draw
//! from independent streams and adding a consumer never perturbs another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; good avalanche for seed mixing.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent sub-seed from a base seed and a stream tag.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    mix(base ^ mix(tag))
}

/// RNG for the stream identified by `tag` under `base`.
pub fn stream_rng(base: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tag))
}

/// Stream tags used by the simulator and trainers.
pub mod tags {
    pub const IMU_NOISE: u64 = 1;
    pub const TOF: u64 = 2;
    pub const FORCE: u64 = 3;
    pub const DETECT: u64 = 4;
    pub const GESTURE_GEN: u64 = 5;
    pub const TRAIN_INIT: u64 = 6;
    pub const TRAIN_SHUFFLE: u64 = 7;
    pub const TRAIN_DROPOUT: u64 = 8;
    pub const DATASET: u64 = 9;
    pub const SPLIT: u64 = 10;
}
