//! Deterministic seed derivation.
//!
//! Every stochastic stage of the pipeline derives its own seed from the
//! run's master seed, a stream tag identifying the stage, and an index
//! (trajectory number, trial number, ...). Equal inputs always yield equal
//! seeds; the chained mix below is a bijection in its final tag, so two
//! derivations that differ in any single tag produce different seeds.

/// Stream tag: problem-instance sampling (one per trajectory index).
pub const STREAM_PROBLEM: u64 = 1;
/// Stream tag: optimizer init + minibatch order (one per trajectory index).
pub const STREAM_OPTIMIZER: u64 = 2;
/// Stream tag: train/dev/test split permutation (one per trial).
pub const STREAM_SPLIT: u64 = 3;
/// Stream tag: forecaster training (one per trial x model).
pub const STREAM_TRAIN: u64 = 4;
/// Stream tag: synthetic update schedules for the closed-form checker.
pub const STREAM_SCHEDULE: u64 = 5;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer: a 64-bit bijective mixer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `master` and a sequence of tags.
///
/// Typical use: `derive_seed(master, &[STREAM_PROBLEM, index])`.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut h = mix(master.wrapping_add(GOLDEN));
    for &t in tags {
        h = mix(h.wrapping_add(GOLDEN).wrapping_add(t));
    }
    h
}
