//! Seeded random draws.
//!
//! The generator is ChaCha8 keyed from a 64-bit seed. Per-item generators for
//! parallel work reuse the base key and select the ChaCha stream by item
//! index, so `(seed, index)` always yields the same sequence on every
//! platform. Floats are built from the top 53 bits of each `u64`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Source of the random quantities the augmentation and fixture code draws.
pub trait Draws {
    /// Uniform in `[lo, hi)`; exactly `lo` when the range is empty.
    fn uniform(&mut self, lo: f64, hi: f64) -> f64;

    /// Bernoulli trial with success probability `p`.
    fn chance(&mut self, p: f64) -> bool;

    /// Uniform index in `0..n`, `n ≥ 1`.
    fn index(&mut self, n: usize) -> usize;
}

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
    seed: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
            seed,
        }
    }

    /// Independent generator for item `index` under base `seed`.
    pub fn for_item(seed: u64, index: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(index);
        Self { inner, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    fn unit(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl Draws for SeededRng {
    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = self.unit();
        if hi > lo {
            lo + (hi - lo) * u
        } else {
            lo
        }
    }

    fn chance(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    fn index(&mut self, n: usize) -> usize {
        assert!(n >= 1, "index draw over an empty range");
        ((self.unit() * n as f64) as usize).min(n - 1)
    }
}

/// Degenerate source: every range yields its midpoint and only certain
/// events (`p ≥ 1`) happen. Useful to pin an augmentation to its centered,
/// unperturbed configuration.
#[derive(Debug, Clone, Copy, Default)]
pub struct Centered;

impl Draws for Centered {
    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if hi > lo {
            0.5 * (lo + hi)
        } else {
            lo
        }
    }

    fn chance(&mut self, p: f64) -> bool {
        p >= 1.0
    }

    fn index(&mut self, n: usize) -> usize {
        n / 2
    }
}
