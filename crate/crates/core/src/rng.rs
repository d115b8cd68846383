//! Seeding utilities.
//!
//! Every stochastic stage draws from its own ChaCha stream. Stage seeds are
//! derived from a master seed with a counter-based splitter, so any stage can
//! be re-run on its own and still see exactly the numbers it saw inside the
//! full pipeline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used throughout the crate.
pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives independent per-stage seeds from one master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedSplitter {
    master: u64,
}

impl SeedSplitter {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Seed for the stage at `counter`.
    pub fn seed(&self, counter: u64) -> u64 {
        splitmix64(splitmix64(self.master) ^ counter.wrapping_mul(0xD1B5_4A32_D192_ED03))
    }

    /// Seed for a named stage. Names are hashed with FNV-1a so the mapping is
    /// stable across platforms and compiler versions.
    pub fn named(&self, stage: &str) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in stage.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        self.seed(h)
    }

    pub fn rng(&self, stage: &str) -> SimRng {
        rng_from_seed(self.named(stage))
    }

    /// A child splitter, for stages that themselves fan out.
    pub fn child(&self, stage: &str) -> SeedSplitter {
        SeedSplitter::new(self.named(stage))
    }
}
