//! Seed derivation for reproducible, order-independent Monte Carlo.
//!
//! Every random stream is a ChaCha generator keyed by a 64-bit seed. Child seeds
//! are derived from a master seed and a path of indices (grid point, replica,
//! attempt, purpose) with a SplitMix64 finalizer, so the stream a replica sees
//! never depends on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for every random draw in the crate.
pub type Rng = ChaCha8Rng;

/// Stream purposes, mixed into derived seeds so that positions, edges and
/// noise of the same replica are independent.
pub mod stream {
    pub const POSITIONS: u64 = 1;
    pub const EDGES: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const PERTURBATION: u64 = 4;
    pub const PILOT: u64 = 5;
    pub const QUERY: u64 = 6;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `master` and a path of indices.
pub fn derive(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &k| splitmix64(acc ^ splitmix64(k.wrapping_add(0x5851_F42D_4C95_7F2D))))
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
