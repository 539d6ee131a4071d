//! Hierarchical seed splitting. Every random stream in the pipeline is
//! derived from one user seed plus a stream label, so components never
//! share generator state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stable (FNV-1a) hash of a stream label.
fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn derive(seed: u64, label: &str) -> u64 {
    splitmix64(seed ^ splitmix64(label_hash(label)))
}

pub fn derive_index(seed: u64, index: u64) -> u64 {
    splitmix64(seed.wrapping_add(splitmix64(index.wrapping_add(1))))
}

pub fn rng(seed: u64, label: &str) -> Rng {
    Rng::seed_from_u64(derive(seed, label))
}

pub fn rng_indexed(seed: u64, index: u64) -> Rng {
    Rng::seed_from_u64(derive_index(seed, index))
}
