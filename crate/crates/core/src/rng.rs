//! Portable seeded random streams.
//!
//! Every random decision in the pipeline (schema sampling, cell draws, the
//! noisy mock annotator) pulls from a [`Stream`] keyed by a tuple of
//! integers. Two calls with the same key see the same sequence on every
//! platform and every build, independent of call order or thread
//! scheduling. The generator is SplitMix64; keys are folded through the
//! SplitMix64 finalizer.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const KEY_INIT: u64 = 0x243F_6A88_85A3_08D3;

/// Stream domain: per-epoch schema sampling.
pub const TAG_SCHEMA_SAMPLING: u64 = 0x5343_4845_4D41;
/// Stream domain: pseudo-table cell draws.
pub const TAG_CELL_DRAW: u64 = 0x4345_4C4C;
/// Stream domain: noisy mock annotator decisions.
pub const TAG_MOCK_NOISE: u64 = 0x004E_4F49_5345;

/// SplitMix64 output finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct Stream {
    state: u64,
}

impl Stream {
    pub fn from_seed(seed: u64) -> Self {
        Self { state: seed }
    }

    /// A stream whose state is derived from every part of `key`, in order.
    pub fn keyed(key: &[u64]) -> Self {
        let mut h = KEY_INIT;
        for &part in key {
            h = mix64(h.wrapping_add(GOLDEN_GAMMA) ^ part);
        }
        Self { state: h }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Unbiased uniform integer in `[0, bound)`. `bound` must be non-zero.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "bound must be positive");
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % bound;
            }
        }
    }

    /// `count` distinct indices from `0..len`, in draw order (partial
    /// Fisher-Yates). Requires `count <= len`.
    pub fn choose_distinct(&mut self, len: usize, count: usize) -> Vec<usize> {
        assert!(count <= len, "cannot draw {count} distinct from {len}");
        let mut pool: Vec<usize> = (0..len).collect();
        for i in 0..count {
            let j = i + self.below((len - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }

    /// `count` indices from `0..len` drawn independently (with replacement).
    pub fn choose_with_replacement(&mut self, len: usize, count: usize) -> Vec<usize> {
        assert!(len > 0, "cannot draw from an empty range");
        (0..count).map(|_| self.below(len as u64) as usize).collect()
    }
}
