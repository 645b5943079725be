//! Keyed deterministic random streams.
//!
//! Every random draw in the pipeline comes from a ChaCha stream whose seed is
//! derived from a base seed plus a tuple of integer keys (epoch, user, ...),
//! so the order in which streams are created never affects their contents.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream-domain tags so that e.g. split and negative sampling never share a stream.
pub mod domain {
    pub const SPLIT: u64 = 1;
    pub const TRAIN_NEGATIVES: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const EVAL_NEGATIVES: u64 = 4;
    pub const INIT: u64 = 5;
    pub const BASELINE_LABELS: u64 = 6;
    pub const SYNTHETIC: u64 = 7;
    pub const GRAD_CHECK: u64 = 8;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(base), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn keyed_rng(base: u64, keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, keys))
}
