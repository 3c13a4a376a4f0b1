//! Reproducible random numbers for corpus synthesis.
//!
//! Stream: ChaCha8 keyed by `rand_chacha`'s `seed_from_u64(seed)`. On top of
//! the raw `u64` stream every derived draw uses a fixed recipe, so corpora are
//! reproducible from the seed alone:
//!
//! - uniform `[0, 1)`: top 53 bits of one `u64`, times `2^-53`
//! - integer below `n`: Lemire's multiply-shift with rejection
//! - standard normal: Box-Muller cosine branch, `u1 = 1 - uniform()`, one
//!   normal per two uniforms
//! - shuffle: Fisher-Yates from the last index down

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SynthRng(ChaCha8Rng);

impl SynthRng {
    pub fn new(seed: u64) -> Self {
        SynthRng(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`; `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        let mut m = u128::from(self.next_u64()) * u128::from(n);
        if (m as u64) < n {
            let threshold = n.wrapping_neg() % n;
            while (m as u64) < threshold {
                m = u128::from(self.next_u64()) * u128::from(n);
            }
        }
        (m >> 64) as u64
    }

    /// Uniform integer in `lo..=hi`.
    pub fn range_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        assert!(lo <= hi);
        lo + self.below((hi - lo) as u64 + 1) as usize
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
