//! Seeded random streams.
//!
//! Every stochastic routine takes a `u64` seed. Work that fans out over
//! samples derives one ChaCha stream per sample index, so results do not
//! depend on how the samples are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// The generator for `seed` on the default stream.
pub fn seeded(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// An independent stream derived from `(seed, index)`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}
