//! Seed management.
//!
//! Every random stream in a simulation is derived from one master seed by
//! hashing a path of integer tags (run index, step, worker, trial, ...). A
//! stream therefore depends only on its path, never on how many draws other
//! streams consumed, so serial and parallel execution see identical numbers.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream tags used by the controller and harness.
pub mod tag {
    pub const POPULATION: u64 = 1;
    pub const BETA: u64 = 2;
    pub const VERIFY: u64 = 3;
    pub const TRIAL: u64 = 4;
    pub const RUN: u64 = 5;
    pub const SURVEY: u64 = 6;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `seed` and a path of tags.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub fn stream(seed: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive(seed, path))
}

/// SplitMix64 generator for short, high-volume streams (one per
/// verification trial), where ChaCha's block setup would dominate.
#[derive(Debug, Clone)]
pub struct TrialRng(u64);

impl TrialRng {
    pub fn new(seed: u64, path: &[u64]) -> Self {
        TrialRng(derive(seed, path))
    }
}

impl RngCore for TrialRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        rand::rand_core::impls::fill_bytes_via_next(self, dst)
    }
}
