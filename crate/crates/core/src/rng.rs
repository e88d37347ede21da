//! Seeded random sources.
//!
//! Every stochastic study in this crate draws from ChaCha8 seeded with an
//! explicit `u64`. Independent runs inside an ensemble get their own seed,
//! derived from the master seed and the run index with the SplitMix64
//! finalizer, so run `i` is the same no matter how many runs are requested.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for sub-run `index` of an ensemble started from `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
