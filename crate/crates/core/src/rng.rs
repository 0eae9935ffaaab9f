//! Counter-based random streams.
//!
//! Every simulated path draws from its own ChaCha8 stream. The cipher key is
//! derived by hashing the master seed together with the `(experiment, level,
//! batch)` part of the stream id; the path index selects the ChaCha stream
//! under that key. Any path can therefore be regenerated in isolation, which is
//! what makes estimates independent of how paths are distributed over threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Batch tag reserved for regression training paths.
pub const BATCH_TRAINING: u32 = 0xC0FF_EE00;
/// Batch tag for estimator evaluation paths.
pub const BATCH_EVALUATION: u32 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub experiment: u64,
    pub level: u32,
    pub batch: u32,
    pub path: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream {
    pub master_seed: u64,
    pub id: StreamId,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes an arbitrary list of words into one 64-bit value. Used by callers to
/// derive experiment ids from `(algorithm, accuracy index, run)` tuples.
pub fn mix_words(words: &[u64]) -> u64 {
    let mut state = 0x6A09_E667_F3BC_C908;
    let mut acc = 0u64;
    for &w in words {
        state ^= w;
        acc = splitmix64(&mut state) ^ acc.rotate_left(17);
    }
    acc
}

impl SeedStream {
    pub fn new(master_seed: u64, experiment: u64, level: u32, batch: u32, path: u64) -> Self {
        Self {
            master_seed,
            id: StreamId {
                experiment,
                level,
                batch,
                path,
            },
        }
    }

    pub fn with_path(self, path: u64) -> Self {
        Self {
            id: StreamId { path, ..self.id },
            ..self
        }
    }

    pub fn with_level(self, level: u32) -> Self {
        Self {
            id: StreamId { level, ..self.id },
            ..self
        }
    }

    pub fn with_batch(self, batch: u32) -> Self {
        Self {
            id: StreamId { batch, ..self.id },
            ..self
        }
    }

    fn key(&self) -> [u8; 32] {
        let mut state = self.master_seed;
        let tag = ((self.id.level as u64) << 32) | self.id.batch as u64;
        let mut key = [0u8; 32];
        // Three absorb rounds followed by four squeezes.
        state ^= splitmix64(&mut state) ^ self.id.experiment;
        state ^= splitmix64(&mut state) ^ tag;
        state ^= splitmix64(&mut state);
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        key
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key());
        rng.set_stream(self.id.path);
        rng
    }

    /// Fills `out` with independent standard normal draws.
    pub fn fill_standard_normal(&self, out: &mut [f64]) {
        let mut rng = self.rng();
        for v in out.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
    }
}
