//! Labeled sub-seed derivation.
//!
//! Every random stream in an experiment is seeded from a base seed and a
//! short label, so adding a new stream never perturbs the existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derive a 64-bit seed for the stream `label` from `base`.
pub fn sub_seed(base: u64, label: &str) -> u64 {
    // FNV-1a over the label, then a splitmix64 finalizer mixed with the base.
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in label.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = base ^ hash.rotate_left(17);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic generator for the stream `label` under `base`.
pub fn stream(base: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(base, label))
}
