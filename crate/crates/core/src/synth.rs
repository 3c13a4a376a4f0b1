//! Synthetic n-way parallel corpora.
//!
//! Each item draws a handful of latent unit "word" vectors. Every language
//! renders the item by (optionally) shuffling the word order and emitting a
//! random number of noisy, re-normalized copies of each word. Languages
//! therefore share the semantic space but differ in word order and length,
//! which is enough to separate order-sensitive from order-free measures.
//!
//! Frame noise is isotropic Gaussian with per-component standard deviation
//! `noise_sigma / sqrt(d)`, so the expected noise norm is about `noise_sigma`
//! whatever the dimension.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    write_sequence, CorpusError, CorpusManifest, EmbeddingSequence, ManifestItem, UtteranceEntry,
    DEFAULT_FRAME_RATE_HZ,
};
use crate::matrix::Matrix;
use crate::metrics::MetricSpec;
use crate::retrieval::ScoreMatrix;
use crate::rng::SynthRng;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Inclusive integer range, written `[min, max]` in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct IntRange {
    pub min: usize,
    pub max: usize,
}

impl IntRange {
    pub const fn new(min: usize, max: usize) -> Self {
        IntRange { min, max }
    }
}

impl From<[usize; 2]> for IntRange {
    fn from([min, max]: [usize; 2]) -> Self {
        IntRange { min, max }
    }
}

impl From<IntRange> for [usize; 2] {
    fn from(r: IntRange) -> Self {
        [r.min, r.max]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_items: usize,
    pub d: usize,
    pub words_per_item: IntRange,
    pub frames_per_word: IntRange,
    pub noise_sigma: f64,
    pub shuffle_word_order: bool,
    pub n_languages: usize,
    pub seed: u64,
    pub frame_rate_hz: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_items: 200,
            d: 64,
            words_per_item: IntRange::new(3, 8),
            frames_per_word: IntRange::new(2, 6),
            noise_sigma: 0.3,
            shuffle_word_order: true,
            n_languages: 2,
            seed: 0,
            frame_rate_hz: DEFAULT_FRAME_RATE_HZ,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: String| Err(SynthError::Config(m));
        if self.n_items < 2 {
            return fail(format!("n_items must be at least 2, got {}", self.n_items));
        }
        if self.d < 2 {
            return fail(format!("d must be at least 2, got {}", self.d));
        }
        if self.n_languages < 2 {
            return fail(format!("n_languages must be at least 2, got {}", self.n_languages));
        }
        for (name, r) in [("words_per_item", self.words_per_item), ("frames_per_word", self.frames_per_word)] {
            if r.min == 0 || r.min > r.max {
                return fail(format!("{name} range [{}, {}] is empty or starts at 0", r.min, r.max));
            }
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return fail(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(self.frame_rate_hz > 0.0) || !self.frame_rate_hz.is_finite() {
            return fail(format!("frame_rate_hz must be positive, got {}", self.frame_rate_hz));
        }
        Ok(())
    }

    pub fn language_codes(&self) -> Vec<String> {
        (1..=self.n_languages).map(|i| format!("lang{i}")).collect()
    }
}

pub fn item_id(index: usize) -> String {
    format!("item{index:05}")
}

fn unit_gaussian(rng: &mut SynthRng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// In-memory corpus: `corpus[language][item]`, rows unit-normalized.
///
/// Draw order: for each item, its word count and word vectors, then for each
/// language its word order, and per word the frame count and frame noise.
pub fn generate_sequences(config: &SynthConfig) -> Result<Vec<Vec<EmbeddingSequence>>, SynthError> {
    config.validate()?;
    let langs = config.language_codes();
    let mut rng = SynthRng::new(config.seed);
    let noise_scale = config.noise_sigma / (config.d as f64).sqrt();
    let mut corpus: Vec<Vec<EmbeddingSequence>> = vec![Vec::with_capacity(config.n_items); langs.len()];
    for item in 0..config.n_items {
        let n_words = rng.range_inclusive(config.words_per_item.min, config.words_per_item.max);
        let words: Vec<Vec<f64>> = (0..n_words).map(|_| unit_gaussian(&mut rng, config.d)).collect();
        for (li, lang) in langs.iter().enumerate() {
            let mut order: Vec<usize> = (0..n_words).collect();
            if config.shuffle_word_order {
                rng.shuffle(&mut order);
            }
            let mut frames = Vec::new();
            for &w in &order {
                let n_frames = rng.range_inclusive(config.frames_per_word.min, config.frames_per_word.max);
                for _ in 0..n_frames {
                    let mut v: Vec<f64> = words[w].iter().map(|x| x + noise_scale * rng.normal()).collect();
                    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.iter_mut().for_each(|x| *x /= n);
                    frames.extend(v.into_iter().map(|x| x as f32));
                }
            }
            let seq = EmbeddingSequence::new(item_id(item), lang.clone(), config.d, frames)?;
            corpus[li].push(seq);
        }
    }
    Ok(corpus)
}

/// Writes `<out_dir>/<lang>/<item>.eseq` plus `<out_dir>/manifest.json` and
/// returns the manifest. The config is echoed under `generator`.
pub fn generate(config: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<CorpusManifest, SynthError> {
    let out_dir = out_dir.as_ref();
    let corpus = generate_sequences(config)?;
    let langs = config.language_codes();
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SynthError::Io { path, source }
    };
    for lang in &langs {
        let dir = out_dir.join(lang);
        fs::create_dir_all(&dir).map_err(io(&dir))?;
    }
    let mut items = Vec::with_capacity(config.n_items);
    for item in 0..config.n_items {
        let mut utterances = std::collections::BTreeMap::new();
        for (li, lang) in langs.iter().enumerate() {
            let seq = &corpus[li][item];
            let rel = format!("{lang}/{}.eseq", seq.item_id());
            write_sequence(out_dir.join(&rel), seq)?;
            utterances.insert(
                lang.clone(),
                UtteranceEntry {
                    path: rel,
                    frames: seq.len(),
                    dim: seq.dim(),
                    duration_s: Some(seq.len() as f64 / config.frame_rate_hz),
                },
            );
        }
        items.push(ManifestItem {
            id: item_id(item),
            utterances,
        });
    }
    let mut manifest = CorpusManifest::new(config.frame_rate_hz, langs, items);
    manifest.generator = Some(serde_json::json!({
        "tool": "speechsim-synth",
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
    }));
    manifest.set_base_dir(out_dir);
    let path = out_dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(manifest)
}

/// Uniform `[0, 1)` scores with ids `item00000..` on both sides, for
/// chance-level baselines under identity truth.
pub fn random_scorer(n_queries: usize, n_candidates: usize, seed: u64) -> ScoreMatrix {
    assert!(n_queries > 0 && n_candidates > 0, "sizes must be positive");
    let mut rng = SynthRng::new(seed);
    let scores = Matrix::from_fn(n_queries, n_candidates, |_, _| rng.uniform());
    ScoreMatrix::new(
        "random",
        "random",
        (0..n_queries).map(item_id).collect(),
        (0..n_candidates).map(item_id).collect(),
        scores,
        MetricSpec::default(),
    )
    .expect("uniform scores are finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::seqsim;
    use crate::retrieval::{identity_truth, retrieve};

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_items: 6,
            d: 8,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_renderings_match() {
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            shuffle_word_order: false,
            ..small(5)
        };
        let corpus = generate_sequences(&cfg).unwrap();
        for item in 0..cfg.n_items {
            let a = corpus[0][item].clone().normalize_rows().unwrap();
            let b = corpus[1][item].clone().normalize_rows().unwrap();
            assert!((seqsim(&a, &b).unwrap() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn lengths_follow_ranges() {
        let cfg = small(9);
        for lang in generate_sequences(&cfg).unwrap() {
            for s in lang {
                assert!(s.len() >= 3 * 2 && s.len() <= 8 * 6, "{}", s.len());
                assert_eq!(s.dim(), 8);
            }
        }
    }

    #[test]
    fn deterministic_in_memory() {
        assert_eq!(generate_sequences(&small(1)).unwrap(), generate_sequences(&small(1)).unwrap());
        assert_ne!(generate_sequences(&small(1)).unwrap(), generate_sequences(&small(2)).unwrap());
    }

    #[test]
    fn config_validation() {
        let bad = [
            SynthConfig { n_items: 1, ..small(0) },
            SynthConfig { d: 1, ..small(0) },
            SynthConfig { n_languages: 1, ..small(0) },
            SynthConfig { words_per_item: IntRange::new(4, 3), ..small(0) },
            SynthConfig { frames_per_word: IntRange::new(0, 3), ..small(0) },
            SynthConfig { noise_sigma: -1.0, ..small(0) },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(SynthError::Config(_))), "{cfg:?}");
        }
    }

    #[test]
    fn random_scorer_is_reproducible() {
        assert_eq!(random_scorer(4, 5, 3), random_scorer(4, 5, 3));
        assert_ne!(random_scorer(4, 5, 3), random_scorer(4, 5, 4));
        let one = random_scorer(1, 1, 0);
        let r = retrieve(&one, &identity_truth(one.query_ids()), &[1]).unwrap();
        assert_eq!(r.r_at_1(), 1.0);
    }
}
