//! Deterministic seed derivation.
//!
//! Every random stream in the laboratory is derived from a master seed and a
//! tuple of labels through a splitmix64 finalizer, so streams are independent
//! of scheduling order and stable across platforms and toolchain versions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Incremental mixer over heterogeneous labels.
#[derive(Debug, Clone, Copy)]
pub struct SeedMixer {
    state: u64,
}

impl SeedMixer {
    pub fn new(master: u64) -> Self {
        Self {
            state: splitmix64(master),
        }
    }

    pub fn u64(mut self, v: u64) -> Self {
        self.state = splitmix64(self.state ^ splitmix64(v.wrapping_add(GOLDEN)));
        self
    }

    pub fn str(self, s: &str) -> Self {
        // FNV-1a over the bytes, then mixed like any other word.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in s.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        self.u64(h).u64(s.len() as u64)
    }

    pub fn finish(self) -> u64 {
        self.state
    }
}

/// Seed of one (method, signal, execution) fit.
pub fn execution_seed(master: u64, method_id: &str, signal_id: &str, execution: u32) -> u64 {
    SeedMixer::new(master)
        .str(method_id)
        .str(signal_id)
        .u64(u64::from(execution))
        .finish()
}

/// Seed a ChaCha stream from a derived seed and a sub-stream label.
pub fn substream(seed: u64, label: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(SeedMixer::new(seed).u64(label).finish())
}
