//! Seeded randomness. Every stochastic step in the pipeline draws from a
//! `ChaCha8Rng` whose seed is derived from the run seed, so results do not
//! depend on thread scheduling or on the `rand` version's default RNG.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

/// Seed streams used across the pipeline, kept distinct so that e.g. the
/// dropout masks of a member do not share a stream with its initialisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    Dropout = 3,
    Synth = 4,
    Split = 5,
    Forest = 6,
    Selector = 7,
    Bootstrap = 8,
    CrossVal = 9,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed for `(stream, index)` from a base seed.
pub fn derive_seed(base: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ splitmix64(stream as u64)) ^ index)
}

pub fn rng_for(base: u64, stream: Stream, index: u64) -> SeededRng {
    SeededRng::seed_from_u64(derive_seed(base, stream, index))
}
