//! Similarity measures between variable-length frame-embedding sequences and
//! a deterministic cross-lingual speech-to-speech retrieval engine.
//!
//! Four sequence measures are provided, all over unit-normalized frames:
//! SeqSim (greedy frame-matching F1), AvgSim (cosine of mean frames), DTWSim
//! (monotone alignment cost) and OTSim (order-free transport cost). Scores
//! feed an argmax retriever that reports recall@k over n-way parallel corpora.
//!
//! ```
//! use speechsim::{EmbeddingSequence, MetricKind, MetricSpec, similarity};
//!
//! let x = EmbeddingSequence::from_rows("a", "en", &[[1.0f32, 0.0], [0.0, 1.0]])?.normalize_rows()?;
//! let y = EmbeddingSequence::from_rows("a", "fr", &[[1.0f32, 0.0]])?.normalize_rows()?;
//! let s = similarity(&x, &y, &MetricSpec::new(MetricKind::SeqSim))?;
//! assert!((s - 2.0 / 3.0).abs() < 1e-12);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod corpus;
pub mod matrix;
pub mod metrics;
pub mod report;
pub mod retrieval;
pub mod rng;
pub mod synth;

pub use align::{AlignError, CostMatrix, TransportPlan, WarpPath};
pub use corpus::{CorpusError, CorpusManifest, EmbeddingSequence, WordSpan};
pub use matrix::Matrix;
pub use metrics::{similarity, GramMatrix, MetricError, MetricKind, MetricSpec};
pub use retrieval::{
    grid, retrieve, score_all, sweep, Grid, RetrievalError, RetrievalReport, ScoreMatrix, ScoreOptions, Throughput,
};
pub use synth::{SynthConfig, SynthError};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
