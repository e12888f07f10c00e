//! Seedable, replayable randomness.
//!
//! Every party and the adversary draw from their own ChaCha8 stream derived
//! from a single root seed, so a trial replays bit-for-bit from
//! `(seed, stream)` regardless of the order in which parties consume draws.

use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::protocol::Party;

/// Identifier of an independent substream under one root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StreamId(pub u64);

impl StreamId {
    /// Substream owned by `party` while it takes part in hop `hop` (1-based).
    pub const fn for_party(hop: u8, party: Party) -> Self {
        StreamId(((hop as u64) << 8) | party as u64)
    }
}

/// A deterministic random source for one party within one trial.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    stream: StreamId,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64, stream: StreamId) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream.0);
        RandomSource { seed, stream, rng }
    }

    pub fn for_party(seed: u64, hop: u8, party: Party) -> Self {
        Self::new(seed, StreamId::for_party(hop, party))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> StreamId {
        self.stream
    }

    /// Uniform draw from `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform draw from `0..n`. `n` must be nonzero.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Bernoulli trial with success probability `p`, clamped to `[0, 1]`.
    pub fn chance(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            false
        } else if p >= 1.0 {
            true
        } else {
            self.uniform() < p
        }
    }

    /// `amount` distinct positions from `0..len`, uniform without
    /// replacement, returned in ascending order.
    pub fn sample_positions(&mut self, len: usize, amount: usize) -> Vec<usize> {
        let mut picked = rand::seq::index::sample(&mut self.rng, len, amount).into_vec();
        picked.sort_unstable();
        picked
    }

    /// Index sampled from a discrete distribution. Outcomes with zero
    /// probability are never returned, even under rounding at the tail.
    pub fn pick_weighted(&mut self, probabilities: &[f64]) -> usize {
        let u = self.uniform();
        let mut acc = 0.0;
        let mut last_possible = 0;
        for (i, &p) in probabilities.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            last_possible = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
        last_possible
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
