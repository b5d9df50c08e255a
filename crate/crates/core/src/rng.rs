//! Seeded random streams.
//!
//! Every stochastic component takes a seed or a generator derived from a
//! parent seed with [`derive_seed`], so runs split across threads stay
//! reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type PepperRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> PepperRng {
    PepperRng::seed_from_u64(seed)
}

/// Counter-based child seed: a SplitMix64 finalizer over `(parent, lane)`.
pub fn derive_seed(parent: u64, lane: u64) -> u64 {
    let mut z = parent
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(lane.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
