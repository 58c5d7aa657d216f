//! Seeded random streams.
//!
//! Every stochastic operation draws from a `ChaCha8Rng` seeded from a 64-bit
//! seed. Independent streams (per design row, per fit restart) are derived by
//! mixing a tag into the seed, so results do not depend on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for the sub-stream identified by `tag`.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    // FNV-1a over the tag, then a splitmix64 finalizer over the combination.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(seed ^ splitmix64(h))
}

pub fn derived_rng(seed: u64, tag: &str) -> StreamRng {
    seeded_rng(derive_seed(seed, tag))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
