//! Counter-based random streams.
//!
//! Every random quantity is addressed by `(seed, purpose, index, replicate)`:
//! the ChaCha stream id encodes purpose and index, and the word position is a
//! fixed function of the replicate number. A replicate therefore sees the same
//! numbers no matter which worker computes it or which grid it is evaluated on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for; keeps unrelated draws disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    /// Tuples of the `m`-th Neumann term.
    NeumannTerm = 1,
    /// Draws of the parametric-integral estimator.
    Integral = 2,
    /// Tuples of the derivative estimator.
    Derivative = 3,
    /// The geometric powers `τ(j)`.
    GeometricPower = 4,
    /// Tuples of the `j`-th geometric sub-average.
    GeometricTerm = 5,
    /// Batches of the Gaussian-supremum simulation.
    GaussBatch = 6,
    /// Monte-Carlo estimates of power norms.
    PowerNorm = 7,
    /// Spot checks of envelopes and samplers.
    Check = 8,
    /// Bootstrap resampling in reports.
    Bootstrap = 9,
}

/// Words reserved per replicate; a replicate may draw at most this many `u64`.
pub const WORDS_PER_REPLICATE_UNIT: u128 = 2;

/// Stream for `(seed, purpose, index)` positioned at `replicate`, where each
/// replicate owns `draws_per_replicate` 64-bit draws.
pub fn substream(seed: u64, purpose: Purpose, index: u64, replicate: u64, draws_per_replicate: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 56) | (index & ((1u64 << 56) - 1)));
    rng.set_word_pos(replicate as u128 * draws_per_replicate as u128 * WORDS_PER_REPLICATE_UNIT);
    rng
}

/// Moves an existing stream to the start of `replicate`.
pub fn seek(rng: &mut StreamRng, replicate: u64, draws_per_replicate: u64) {
    rng.set_word_pos(replicate as u128 * draws_per_replicate as u128 * WORDS_PER_REPLICATE_UNIT);
}

/// Uniform on `[0, 1)` consuming exactly one 64-bit draw.
#[inline]
pub fn uniform(rng: &mut StreamRng) -> f64 {
    rng.random::<f64>()
}
