//! Counter-keyed random streams.
//!
//! Every random draw in the crate comes from a generator keyed by
//! `(seed, domain, index, step)`. A particle's noise at a given step is
//! therefore a pure function of those four numbers, and results do not depend
//! on how work is split across threads.

use rand::SeedableRng;
use rand_xoshiro::SplitMix64;

/// Separates the purposes random numbers are drawn for, so e.g. initial
/// positions and step noise of the same particle never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Initial = 1,
    Step = 2,
    Picard = 3,
    Bridge = 4,
    Bootstrap = 5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    seed: u64,
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn key(&self, domain: Domain, index: u64, step: u64) -> u64 {
        let mut k = mix64(self.seed ^ (domain as u64).wrapping_mul(GOLDEN));
        k = mix64(k.wrapping_add(index.wrapping_mul(GOLDEN)));
        mix64(k ^ step.wrapping_mul(0xd1b5_4a32_d192_ed03))
    }

    /// Generator for `(domain, index, step)`.
    #[inline]
    pub fn stream(&self, domain: Domain, index: u64, step: u64) -> SplitMix64 {
        SplitMix64::seed_from_u64(self.key(domain, index, step))
    }
}
