//! Seed derivation for independent generator streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a tuple of identifiers into one 64-bit seed. Distinct tuples give
/// unrelated seeds; the order of the parts matters.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED_C01E_A4u64, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(parts: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(parts))
}

/// Stream tags keep generators for different purposes apart even when the
/// numeric identifiers coincide.
pub mod tag {
    pub const CORRUPT: u64 = 0xC0;
    pub const SYNTH_TRAIN: u64 = 0x51;
    pub const SYNTH_TEST: u64 = 0x52;
    pub const INIT: u64 = 0x1A;
    pub const SHUFFLE: u64 = 0x5F;
    pub const AUGMENT: u64 = 0xA6;
    pub const MIXUP: u64 = 0x3C;
}
