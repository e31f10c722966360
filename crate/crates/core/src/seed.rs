//! Seed derivation for reproducible, order-independent random streams.
//!
//! Every random draw in the crate goes through a [`ChaCha8Rng`] seeded from a
//! `u64`. Child seeds are derived by hashing the parent seed together with a
//! list of stream coordinates, so a trial's stream depends only on its
//! coordinates and never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `master` and stream coordinates.
pub fn derive(master: u64, coords: &[u64]) -> u64 {
    coords.iter().fold(splitmix64(master), |acc, &c| {
        splitmix64(acc ^ splitmix64(c.wrapping_add(GOLDEN)))
    })
}

pub fn rng(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}
