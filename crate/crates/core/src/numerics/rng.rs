//! Counter-based deterministic random number generator.
//!
//! Draw `i` from seed `s` is a pure hash of `(s, i)`, so sequences are
//! bit-reproducible on every platform, state is two words, and independent
//! streams come from hashing a stream tag into the seed rather than from
//! jumping. Statistical quality is SplitMix-grade, which is plenty for the
//! simulation workloads here; nothing in this crate needs cryptographic
//! randomness.

use serde::{Deserialize, Serialize};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const SPLIT_SALT: u64 = 0xB542_1D4F_B7E2_9C1B;

/// Two rounds of multiply-xor-shift avalanche over a seed/word pair
/// (SplitMix64 finalizer with the word folded in up front).
#[inline]
fn mix2(seed: u64, word: u64) -> u64 {
    let mut z = seed ^ word.wrapping_mul(GOLDEN).wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic RNG state: a fixed seed plus a draw counter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    seed: u64,
    counter: u64,
}

impl RngState {
    /// Stream rooted at `seed`, positioned at the first draw.
    pub fn new(seed: u64) -> Self {
        RngState { seed, counter: 0 }
    }

    /// Derives an independent child stream identified by `stream`.
    ///
    /// Splitting does not consume draws from `self`: the same parent always
    /// yields the same child for the same tag, which is how per-scene /
    /// per-retry streams stay reproducible under parallel generation.
    pub fn split(&self, stream: u64) -> RngState {
        RngState::new(mix2(self.seed ^ SPLIT_SALT, stream))
    }

    /// Next raw 64-bit draw.
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let c = self.counter;
        self.counter += 1;
        mix2(self.seed, c)
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Multiply-high range reduction: deterministic, no rejection loop; the
        // bias of ~n/2^64 is irrelevant at simulation scale.
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Uniform integer in `[lo, hi]` (inclusive).
    #[inline]
    pub fn between(&mut self, lo: usize, hi: usize) -> usize {
        debug_assert!(lo <= hi);
        lo + self.below(hi - lo + 1)
    }

    /// True with probability `p`.
    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Standard normal via Box–Muller; always consumes exactly two uniforms,
    /// so the draw count per call is fixed.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1]: keeps the log finite
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Normal with the given mean and standard deviation.
    #[inline]
    pub fn normal_scaled(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.normal()
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }

    /// Uniformly chosen element of a non-empty slice.
    pub fn choose<'a, T>(&mut self, xs: &'a [T]) -> &'a T {
        debug_assert!(!xs.is_empty());
        &xs[self.below(xs.len())]
    }
}
