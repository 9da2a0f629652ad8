//! Reproducible random streams.
//!
//! Every Monte Carlo job gets its own ChaCha8 stream selected by
//! `(master seed, job index)`. Streams do not depend on which thread runs
//! the job, so serial and parallel execution draw identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream `index` of the family keyed by `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derives an independent child seed, for nesting job families
/// (e.g. replicate `k` of an experiment spawning its own runs).
pub fn child_seed(seed: u64, label: u64) -> u64 {
    // splitmix64 finalizer over a mixed pair
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
