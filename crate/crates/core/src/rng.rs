//! Seed handling. Every random stream in the crate is a ChaCha8 generator
//! seeded from a run seed plus a stream tag, so results do not depend on
//! thread scheduling or on the order in which streams are created.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed for a named sub-stream.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix(mix(seed) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn rng_for(seed: u64, stream: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}

/// Stream tags. Values are arbitrary but must never change, or every
/// persisted result stops being reproducible.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const FOLDS: u64 = 3;
    pub const TOY_MEANS: u64 = 4;
    pub const TOY_A: u64 = 5;
    pub const TOY_B: u64 = 6;
    pub const FLIP: u64 = 7;
    pub const SKEW: u64 = 8;
    pub const SPLIT: u64 = 9;
    pub const AUX_FOLD: u64 = 10;
    pub const AUX_BASE: u64 = 11;
    pub const REINIT: u64 = 12;
}
