//! Seed plumbing. Every stochastic step in the crate draws from a
//! `ChaCha8Rng` seeded through these helpers so runs replay bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent child seed, e.g. `derive(shuffle_seed, epoch)`.
pub fn derive(seed: u64, stream: u64) -> u64 {
    mix64(mix64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15)) ^ stream.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// Derive a seed from a text label (set versions, etc).
pub fn derive_str(seed: u64, label: &str) -> u64 {
    label
        .bytes()
        .fold(derive(seed, 0x5e7), |acc, b| derive(acc, u64::from(b)))
}
