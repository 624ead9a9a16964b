//! Seedable random streams with deterministic, keyed substreams.
//!
//! Every parallelizable unit of work (a column update, a row update, a
//! missing cell) draws from its own substream keyed by
//! `(iteration, block, index)`, so results do not depend on how work is
//! scheduled across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Identifies a substream: which sweep, which parameter block, which index
/// within the block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub iteration: u64,
    pub block: u32,
    pub index: u64,
}

impl StreamKey {
    pub fn new(iteration: u64, block: u32, index: u64) -> Self {
        StreamKey { iteration, block, index }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A seeded ChaCha8 generator that can spawn keyed substreams.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { seed, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream derived from this stream's seed and `key` only.
    /// The parent's position is irrelevant.
    pub fn substream(&self, key: StreamKey) -> RngStream {
        let mut h = splitmix64(self.seed);
        h = splitmix64(h ^ key.iteration);
        h = splitmix64(h ^ u64::from(key.block));
        h = splitmix64(h ^ key.index);
        RngStream::new(h)
    }
}

impl RngCore for RngStream {
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
