//! Deterministic derivation of independent RNG streams from a master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

// splitmix64 finaliser
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a path of tags into `seed`, giving a stream that is independent of
/// every other path.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(seed), |acc, &tag| mix(acc ^ mix(tag)))
}

pub fn rng(seed: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive(seed, path))
}

/// Stream tags. Kept as constants so that changing one call site cannot
/// silently collide with another.
pub mod tag {
    pub const USER_OPINIONS: u64 = 1;
    pub const CREATOR_OPINIONS: u64 = 2;
    pub const GRAPH: u64 = 3;
    pub const PARAMS: u64 = 4;
    pub const CHOICE: u64 = 5;
    pub const METRICS: u64 = 6;
    pub const COMMUNITIES: u64 = 7;
    pub const THEORY: u64 = 8;
}
