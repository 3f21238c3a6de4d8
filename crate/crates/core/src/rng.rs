//! Counter-derived random streams.
//!
//! Every stochastic object draws from its own ChaCha stream, addressed by
//! `(master seed, trial, kind)`. Nothing depends on the order in which trials
//! are executed.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// What a derived stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamKind {
    Message = 1,
    Noise = 2,
    Operator = 3,
    MonteCarlo = 4,
    Sampling = 5,
}

/// A 64-bit seed unique to `(master, index, kind)`.
pub fn derive_seed(master: u64, index: u64, kind: StreamKind) -> u64 {
    stream(master, index, kind).next_u64()
}

/// Generator positioned at the start of the `(master, index, kind)` stream.
pub fn stream(master: u64, index: u64, kind: StreamKind) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(kind as u64);
    // 2^40 words per index is far more than any single object consumes.
    rng.set_word_pos(u128::from(index) << 40);
    rng
}

pub fn from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
