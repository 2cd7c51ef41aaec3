//! Deterministic random streams.
//!
//! Every run owns a [`Stream`], a ChaCha12 generator. A run's stream is keyed
//! by the 64-bit master seed (expanded to a 256-bit ChaCha key through
//! `SeedableRng::seed_from_u64`) and selects the ChaCha stream id equal to the
//! run index, so streams for different run indices never overlap and do not
//! depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type Stream = ChaCha12Rng;

/// Seed used whenever a caller does not supply one.
pub const DEFAULT_SEED: u64 = 0x5EED_2012_0000_0001;

/// Stream for repetition `run_index` of an experiment seeded with `master_seed`.
pub fn stream(master_seed: u64, run_index: u64) -> Stream {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(run_index);
    rng
}

/// Derive a child seed, used when one experiment is split into independent
/// sub-experiments (for example one per grid point).
pub fn child_seed(master_seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer over the pair.
    let mut z = master_seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
