//! Seeded, splittable random streams.
//!
//! Every stochastic operation in the crate draws from a [`ChaCha8Rng`] built
//! from an [`RngSeed`]. The master seed keys the generator and the stream
//! index selects one of its 2^64 independent streams, so the output depends
//! only on the two integers and is identical on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct RngSeed {
    pub master_seed: u64,
    #[serde(default)]
    pub stream_index: u64,
}

/// Stream labels used when one run needs several independent generators.
pub mod streams {
    pub const INSTANCE: u64 = 0x696e_7374;
    pub const ENVIRONMENT: u64 = 0x656e_7669;
    pub const AGENT: u64 = 0x6167_656e;
}

impl RngSeed {
    pub const fn new(master_seed: u64, stream_index: u64) -> Self {
        Self {
            master_seed,
            stream_index,
        }
    }

    pub fn from_master(master_seed: u64) -> Self {
        Self::new(master_seed, 0)
    }

    /// A child seed on a different stream of the same master seed.
    pub fn derive(&self, label: u64) -> Self {
        Self::new(self.master_seed, mix(self.stream_index, label))
    }

    /// A child seed keyed by a path of indices (e.g. instance, agent, repetition).
    pub fn derive_path(&self, path: &[u64]) -> Self {
        path.iter().fold(*self, |seed, &label| seed.derive(label))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive hash of two words.
pub fn mix(a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(a) ^ b.rotate_left(17) ^ 0x5851_f42d_4c95_7f2d)
}
