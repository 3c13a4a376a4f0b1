//! Sequence-level similarity measures over unit-normalized frame embeddings.
//!
//! | measure  | definition                                                     |
//! |----------|----------------------------------------------------------------|
//! | SeqSim   | F1 of greedy frame matching: recall = mean row max of `G`, precision = mean column max |
//! | AvgSim   | cosine of the two mean frame vectors                           |
//! | DTWSim   | `1 - D / (T_x + T_y)`, `D` the minimal monotone path cost of `1 - G` |
//! | OTSim    | `1 - W`, `W` the transport cost of `1 - G` between uniform marginals |
//!
//! SeqSim, DTWSim and OTSim are all functions of the Gram matrix `G`; the
//! `*_from_gram` variants let callers share one `G` across measures.

mod gram;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{dtw_cost, ot_exact, sinkhorn, uniform_marginal, AlignError, CostMatrix, TransportPlan};
use crate::corpus::EmbeddingSequence;

pub use gram::{dot, gram, gram_into, GramMatrix, LANES};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("sequence {item_id:?} is not unit-normalized")]
    NotNormalized { item_id: String },
    #[error("mean frame vector of {item_id:?} has zero norm; AvgSim is undefined")]
    ZeroMean { item_id: String },
    #[error("invalid metric spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Align(#[from] AlignError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    SeqSim,
    AvgSim,
    DtwSim,
    OtSim,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [MetricKind::SeqSim, MetricKind::AvgSim, MetricKind::DtwSim, MetricKind::OtSim];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::SeqSim => "seqsim",
            MetricKind::AvgSim => "avgsim",
            MetricKind::DtwSim => "dtwsim",
            MetricKind::OtSim => "otsim",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetricKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| MetricError::InvalidSpec(format!("unknown metric {s:?} (expected seqsim, avgsim, dtwsim or otsim)")))
    }
}

/// Which measure to compute, plus the OT solver parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSpec {
    pub kind: MetricKind,
    pub ot_epsilon: f64,
    pub ot_max_iter: usize,
    pub ot_marginal_tol: f64,
    /// Use the exact solver when both lengths are at most this.
    pub ot_exact_threshold: usize,
}

impl Default for MetricSpec {
    fn default() -> Self {
        MetricSpec {
            kind: MetricKind::SeqSim,
            ot_epsilon: 0.05,
            ot_max_iter: 1000,
            ot_marginal_tol: 1e-9,
            ot_exact_threshold: 16,
        }
    }
}

impl MetricSpec {
    pub fn new(kind: MetricKind) -> Self {
        MetricSpec {
            kind,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        if !(self.ot_epsilon > 0.0) || !self.ot_epsilon.is_finite() {
            return Err(MetricError::InvalidSpec(format!("ot_epsilon must be positive, got {}", self.ot_epsilon)));
        }
        if self.ot_max_iter == 0 {
            return Err(MetricError::InvalidSpec("ot_max_iter must be positive".into()));
        }
        if !(self.ot_marginal_tol > 0.0) {
            return Err(MetricError::InvalidSpec(format!(
                "ot_marginal_tol must be positive, got {}",
                self.ot_marginal_tol
            )));
        }
        Ok(())
    }
}

/// Greedy-matching F1 from a Gram matrix. Returns 0 when precision + recall is exactly 0.
pub fn seqsim_from_gram(g: &GramMatrix) -> f64 {
    let (tx, ty) = (g.rows(), g.cols());
    let mut col_max = vec![f64::NEG_INFINITY; ty];
    let mut recall_sum = 0.0;
    for i in 0..tx {
        let row = g.matrix().row(i);
        let mut row_max = f64::NEG_INFINITY;
        for (cm, &v) in col_max.iter_mut().zip(row) {
            row_max = row_max.max(v);
            *cm = cm.max(v);
        }
        recall_sum += row_max;
    }
    let recall = recall_sum / tx as f64;
    let precision = col_max.iter().sum::<f64>() / ty as f64;
    f1(precision, recall)
}

fn f1(precision: f64, recall: f64) -> f64 {
    let denom = precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / denom
    }
}

pub fn seqsim(x: &EmbeddingSequence, y: &EmbeddingSequence) -> Result<f64, MetricError> {
    Ok(seqsim_from_gram(&gram(x, y)?))
}

/// Mean of a sequence's frames, accumulated in `f64`. Rows of a normalized
/// sequence are rescaled by their exact inverse norms first.
pub fn mean_frame(seq: &EmbeddingSequence) -> Vec<f64> {
    let mut mean = vec![0.0f64; seq.dim()];
    for (i, row) in seq.rows().enumerate() {
        let scale = seq.inv_norms().get(i).copied().unwrap_or(1.0);
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += f64::from(v) * scale;
        }
    }
    let n = seq.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Cosine similarity of two precomputed mean vectors.
pub fn avgsim_from_means(
    x_mean: &[f64],
    y_mean: &[f64],
    x_id: &str,
    y_id: &str,
) -> Result<f64, MetricError> {
    if x_mean.len() != y_mean.len() {
        return Err(MetricError::DimMismatch {
            left: x_mean.len(),
            right: y_mean.len(),
        });
    }
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let (nx, ny) = (norm(x_mean), norm(y_mean));
    for (n, id) in [(nx, x_id), (ny, y_id)] {
        if n < crate::corpus::MIN_ROW_NORM {
            return Err(MetricError::ZeroMean { item_id: id.to_string() });
        }
    }
    let d: f64 = x_mean.iter().zip(y_mean).map(|(a, b)| a * b).sum();
    Ok(d / (nx * ny))
}

pub fn avgsim(x: &EmbeddingSequence, y: &EmbeddingSequence) -> Result<f64, MetricError> {
    gram::check_pair(x, y)?;
    avgsim_from_means(&mean_frame(x), &mean_frame(y), x.item_id(), y.item_id())
}

pub fn dtwsim_from_gram(g: &GramMatrix) -> f64 {
    let cost = CostMatrix::from_similarities(g.matrix());
    1.0 - dtw_cost(&cost) / (g.rows() + g.cols()) as f64
}

pub fn dtwsim(x: &EmbeddingSequence, y: &EmbeddingSequence) -> Result<f64, MetricError> {
    Ok(dtwsim_from_gram(&gram(x, y)?))
}

/// Transport plan between uniform distributions over the two frame sets;
/// exact for small inputs, Sinkhorn otherwise.
pub fn transport_from_gram(g: &GramMatrix, spec: &MetricSpec) -> Result<TransportPlan, MetricError> {
    let cost = CostMatrix::from_similarities(g.matrix());
    let (a, b) = (uniform_marginal(g.rows()), uniform_marginal(g.cols()));
    let plan = if g.rows() <= spec.ot_exact_threshold && g.cols() <= spec.ot_exact_threshold {
        ot_exact(&cost, &a, &b)?
    } else {
        sinkhorn(&cost, &a, &b, spec.ot_epsilon, spec.ot_max_iter, spec.ot_marginal_tol)?
    };
    Ok(plan)
}

pub fn otsim_from_gram(g: &GramMatrix, spec: &MetricSpec) -> Result<f64, MetricError> {
    Ok(1.0 - transport_from_gram(g, spec)?.cost)
}

pub fn otsim(x: &EmbeddingSequence, y: &EmbeddingSequence, spec: &MetricSpec) -> Result<f64, MetricError> {
    otsim_from_gram(&gram(x, y)?, spec)
}

/// `Sim(X, Y)` for the measure selected by `spec.kind`.
pub fn similarity(x: &EmbeddingSequence, y: &EmbeddingSequence, spec: &MetricSpec) -> Result<f64, MetricError> {
    match spec.kind {
        MetricKind::SeqSim => seqsim(x, y),
        MetricKind::AvgSim => avgsim(x, y),
        MetricKind::DtwSim => dtwsim(x, y),
        MetricKind::OtSim => otsim(x, y, spec),
    }
}
