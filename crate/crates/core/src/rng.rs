//! Deterministic random streams.
//!
//! Every random quantity in a scenario is drawn from a ChaCha stream whose
//! seed is a hash of `(master_seed, index, role)`. Streams never depend on
//! scheduling, so parallel and serial runs produce identical draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. Distinct roles give statistically independent
/// streams for the same iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Sample,
    Outcomes,
    Fit,
    Mcmc,
    Mixture,
    Population,
    Surrogate,
    Tracking,
    Split,
    Synthesis,
    Noise,
}

impl Role {
    fn code(self) -> u64 {
        match self {
            Role::Sample => 1,
            Role::Outcomes => 2,
            Role::Fit => 3,
            Role::Mcmc => 4,
            Role::Mixture => 5,
            Role::Population => 6,
            Role::Surrogate => 7,
            Role::Tracking => 8,
            Role::Split => 9,
            Role::Synthesis => 10,
            Role::Noise => 11,
        }
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed keyed by `(seed, index, role)`.
pub fn derive_seed(seed: u64, index: u64, role: Role) -> u64 {
    let a = splitmix64(seed ^ 0x5350_4C41_4E00_0000);
    let b = splitmix64(a ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    splitmix64(b ^ role.code().wrapping_mul(0xA076_1D64_78BD_642F))
}

/// Derives an unkeyed child seed, e.g. one per tree or per column.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

pub fn rng_from_seed(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, index: u64, role: Role) -> StreamRng {
    rng_from_seed(derive_seed(seed, index, role))
}
