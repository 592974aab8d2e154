//! Seeded random streams.
//!
//! Every consumer of randomness in a simulation draws from a stream keyed by
//! `(seed, stream, step)`. Two protocols that perform the same filter step at
//! the same time index therefore consume identical random numbers, no matter
//! how much speculative work either of them did before.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Named random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Stream {
    Trajectory = 1,
    Init = 2,
    Resample = 3,
    Proposal = 4,
    Likelihood = 5,
    Secondary = 6,
    SecondaryLikelihood = 7,
    Diagnostics = 8,
    Oracle = 9,
}

/// Returns the generator for `(seed, stream, index)`.
pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 56) ^ index);
    rng
}

/// Per-step generators used by one filter update.
#[derive(Debug, Clone)]
pub struct StepStreams {
    pub resample: StreamRng,
    pub proposal: StreamRng,
    pub likelihood: StreamRng,
}

impl StepStreams {
    pub fn new(seed: u64, step: u64) -> Self {
        Self {
            resample: stream_rng(seed, Stream::Resample, step),
            proposal: stream_rng(seed, Stream::Proposal, step),
            likelihood: stream_rng(seed, Stream::Likelihood, step),
        }
    }
}
