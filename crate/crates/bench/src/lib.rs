//! Fixtures shared by the benchmarks.

use speechsim::rng::SynthRng;
use speechsim::EmbeddingSequence;

/// `count` normalized sequences of `frames x dim` Gaussian frames.
pub fn random_corpus(seed: u64, count: usize, frames: usize, dim: usize) -> Vec<EmbeddingSequence> {
    let mut rng = SynthRng::new(seed);
    (0..count)
        .map(|i| {
            let data: Vec<f32> = (0..frames * dim).map(|_| rng.normal() as f32).collect();
            EmbeddingSequence::new(format!("item{i:05}"), "bench", dim, data)
                .expect("shape is consistent")
                .normalize_rows()
                .expect("gaussian rows are nonzero")
        })
        .collect()
}
