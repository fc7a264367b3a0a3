//! Reproducible random streams.
//!
//! A chain owns one [`RngStream`]. Every update block derives its own
//! generator from `(seed, stream_id, key...)`, so the draws of a block depend
//! only on where it sits in the run and never on thread scheduling or on how
//! many variates an earlier block consumed. This is also what makes
//! checkpoint/resume exact: no generator state has to be saved.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// The concrete generator used by every kernel.
pub type ChainRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Generator for the stream itself (sequential use).
    pub fn rng(&self) -> ChainRng {
        self.substream(&[])
    }

    /// Independent generator keyed by a path below this stream.
    pub fn substream(&self, key: &[u64]) -> ChainRng {
        let mut h = splitmix(self.seed ^ 0x5EED);
        h = splitmix(h ^ self.stream_id);
        for &k in key {
            h = splitmix(h ^ splitmix(k.wrapping_add(0xA5A5)));
        }
        let mut seed = [0u8; 32];
        let mut s = h;
        for chunk in seed.chunks_mut(8) {
            s = splitmix(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        ChainRng::from_seed(seed)
    }

    /// A child stream with a different id, e.g. one per chain or per L in a sweep.
    pub fn child(&self, id: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: splitmix(self.stream_id ^ splitmix(id.wrapping_add(1))),
        }
    }
}
