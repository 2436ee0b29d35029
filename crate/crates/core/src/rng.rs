//! Seeded, splittable randomness.
//!
//! Every random draw in the crate descends from one root seed. Children are
//! derived by mixing the parent seed with a stream label through SplitMix64,
//! so the order in which children are created does not matter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn label_hash(label: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// A ChaCha8 stream tagged with the seed it was created from.
#[derive(Debug, Clone)]
pub struct SeedRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeedRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream named by `label`.
    pub fn split(&self, label: &str) -> SeedRng {
        SeedRng::new(splitmix64(self.seed ^ splitmix64(label_hash(label))))
    }

    /// Independent child stream named by an index.
    pub fn split_index(&self, index: u64) -> SeedRng {
        SeedRng::new(splitmix64(
            self.seed.wrapping_add(splitmix64(index ^ 0x5eed)),
        ))
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform integer in `[0, bound)`.
    pub fn below(&mut self, bound: usize) -> usize {
        self.inner.gen_range(0..bound)
    }
}
