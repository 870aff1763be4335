//! Seeded random streams.
//!
//! Every consumer of randomness owns a ChaCha8 stream selected by
//! `(seed, stream id)`. Particle `i` of an initial ensemble draws from stream
//! `i`; the training loop and the resampler use reserved ids at the top of
//! the range so they never collide with particle streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const SAMPLING_STREAM: u64 = u64::MAX;
pub(crate) const RESAMPLING_STREAM: u64 = u64::MAX - 1;
pub(crate) const DATA_STREAM: u64 = u64::MAX - 2;
pub(crate) const FOLD_STREAM: u64 = u64::MAX - 3;

pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Child seed for independent sub-experiments (e.g. one cross-validation run).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
