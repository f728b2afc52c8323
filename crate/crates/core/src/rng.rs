//! Deterministic random streams.
//!
//! Every stochastic component draws from a stream derived from the run seed
//! plus a path of tags (purpose, iteration, episode, ...). Streams never share
//! state, so results do not depend on the order in which components run and a
//! resumed run reproduces an uninterrupted one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags used across the crate.
pub mod tag {
    pub const RESET: u64 = 0x7265_7365_7400;
    pub const ROLLOUT: u64 = 0x726f_6c6c_6f75;
    pub const MODEL_TRAIN: u64 = 0x6d6f_6465_6c00;
    pub const VALUE_FIT: u64 = 0x7661_6c75_6500;
    pub const EVAL: u64 = 0x6576_616c_0000;
    pub const INIT: u64 = 0x696e_6974_0000;
    pub const BOOTSTRAP: u64 = 0x626f_6f74_0000;
    pub const TEST_SET: u64 = 0x7465_7374_0000;
    pub const AGGREGATE: u64 = 0x6167_6772_0000;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed and a tag path into a single 64-bit stream seed.
pub fn mix(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// FNV-1a hash, used to turn names into stream tags.
pub fn hash_str(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn stream(seed: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(mix(seed, path))
}

pub fn from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
