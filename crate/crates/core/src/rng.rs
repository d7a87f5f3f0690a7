//! Seeded random streams. Every component draws from its own named stream of a
//! single run seed so that, e.g., changing initialization leaves data shuffling intact.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Sampling = 2,
    Shuffle = 3,
    Synth = 4,
    Eigen = 5,
    Split = 6,
    EvalSampling = 7,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Stream further keyed by an index (fold, sample, ...).
pub fn substream(seed: u64, which: Stream, index: u64) -> ChaCha8Rng {
    let mixed = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    rng.set_stream(which as u64);
    rng
}
