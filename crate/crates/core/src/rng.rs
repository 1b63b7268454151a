//! Seeded random streams.
//!
//! Every stream is ChaCha8 (via `rand_chacha`) keyed by the 64-bit root seed
//! expanded with `seed_from_u64`. Independent sub-streams share the key and
//! differ in the ChaCha stream id: the high 32 bits carry the [`Stream`]
//! purpose, the low 32 bits an optional caller key (sample index, member
//! index, ...). Outputs are bit-identical across platforms.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Purpose tags for sub-streams derived from a root seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u32)]
pub enum Stream {
    Root = 0,
    Init = 1,
    Dropout = 2,
    Shuffle = 3,
    Synth = 4,
    Split = 5,
    Test = 6,
}

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

/// Serializable position of an [`Rng`], enough to resume it exactly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    /// ChaCha word position, as a decimal string (it is a u128).
    pub word_pos: String,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Rng { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Fresh stream for `purpose`, independent of this one's position.
    pub fn substream(&self, purpose: Stream) -> Rng {
        self.keyed(purpose, 0)
    }

    pub fn keyed(&self, purpose: Stream, key: u32) -> Rng {
        Self::with_stream(self.seed, ((purpose as u64) << 32) | key as u64)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f32 {
        self.inner.random::<f32>()
    }

    /// Uniform in `[lo, hi)`.
    pub fn range(&mut self, lo: f32, hi: f32) -> f32 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.seed,
            stream: self.inner.get_stream(),
            word_pos: self.inner.get_word_pos().to_string(),
        }
    }

    pub fn from_state(state: &RngState) -> Option<Rng> {
        let pos: u128 = state.word_pos.parse().ok()?;
        let mut rng = Self::with_stream(state.seed, state.stream);
        rng.inner.set_word_pos(pos);
        Some(rng)
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
