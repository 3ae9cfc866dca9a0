//! Seed derivation.
//!
//! All randomness in the crate flows from explicit 64-bit seeds. Child seeds
//! are derived by hashing the parent with a tag and indices, so a value drawn
//! for artefact `i` never depends on how many values were drawn before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used everywhere a seeded stream is needed.
pub type SeededRng = ChaCha8Rng;

/// One round of the splitmix64 finaliser.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash a parent seed together with any number of words.
pub fn derive(parent: u64, words: &[u64]) -> u64 {
    words.iter().fold(splitmix64(parent), |acc, &w| {
        splitmix64(acc ^ splitmix64(w))
    })
}

/// Domain-separation tags for [`derive`].
pub mod tag {
    pub const COUNTS: u64 = 0x636f_756e_7473;
    pub const ARTEFACT: u64 = 0x6172_7465_6661;
    pub const FIELD: u64 = 0x66_6965_6c64;
    pub const POLARITY: u64 = 0x706f_6c61;
    pub const IMAGE: u64 = 0x69_6d61_6765;
    pub const SPLIT: u64 = 0x73_706c_6974;
    pub const SCRATCH: u64 = 0x7363_7261;
}

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_for(parent: u64, words: &[u64]) -> SeededRng {
    rng(derive(parent, words))
}
