use std::borrow::Borrow;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingSequence;
use crate::matrix::Matrix;
use crate::metrics::{
    avgsim_from_means, dtwsim_from_gram, gram, mean_frame, otsim_from_gram, seqsim_from_gram, MetricError, MetricKind,
    MetricSpec,
};

use super::{PairFailure, RetrievalError, ScoreMatrix};

/// Execution knobs for batch scoring. None of them affect the scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreOptions {
    pub workers: usize,
    /// Record failing pairs and drop their queries instead of aborting.
    pub permissive: bool,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            workers: 1,
            permissive: false,
        }
    }
}

impl ScoreOptions {
    pub fn with_workers(workers: usize) -> Self {
        ScoreOptions {
            workers,
            ..Default::default()
        }
    }
}

/// Throughput accounting for one scoring run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Throughput {
    pub pairs: usize,
    pub elapsed_s: f64,
    pub pairs_per_sec: f64,
    /// Multiply-adds of the Gram kernel, counted as `2 * T_x * T_y * d` per pair.
    pub gram_flops: f64,
}

impl Throughput {
    pub fn gflops_per_sec(&self) -> f64 {
        if self.elapsed_s > 0.0 {
            self.gram_flops / self.elapsed_s / 1e9
        } else {
            0.0
        }
    }
}

/// Score of one pair; the same arithmetic as [`crate::metrics::similarity`].
fn pair_score(
    q: &EmbeddingSequence,
    r: &EmbeddingSequence,
    means: Option<(&[f64], &[f64])>,
    spec: &MetricSpec,
) -> Result<f64, MetricError> {
    match (spec.kind, means) {
        (MetricKind::AvgSim, Some((qm, rm))) => {
            if q.dim() != r.dim() {
                return Err(MetricError::DimMismatch {
                    left: q.dim(),
                    right: r.dim(),
                });
            }
            avgsim_from_means(qm, rm, q.item_id(), r.item_id())
        }
        (MetricKind::AvgSim, None) => crate::metrics::avgsim(q, r),
        (MetricKind::SeqSim, _) => Ok(seqsim_from_gram(&gram(q, r)?)),
        (MetricKind::DtwSim, _) => Ok(dtwsim_from_gram(&gram(q, r)?)),
        (MetricKind::OtSim, _) => otsim_from_gram(&gram(q, r)?, spec),
    }
}

fn check_normalized<S: Borrow<EmbeddingSequence>>(seqs: &[S]) -> Result<(), MetricError> {
    match seqs.iter().map(Borrow::borrow).find(|s| !s.is_normalized()) {
        Some(s) => Err(MetricError::NotNormalized {
            item_id: s.item_id().to_string(),
        }),
        None => Ok(()),
    }
}

/// All-pairs similarity of `queries` against `candidates`.
///
/// Work is split by query rows over `options.workers` threads. Each pair is
/// computed independently with a fixed arithmetic order, so the matrix is
/// bit-identical for every worker count.
pub fn score_all<Q, C>(
    queries: &[Q],
    candidates: &[C],
    spec: &MetricSpec,
    options: &ScoreOptions,
) -> Result<(ScoreMatrix, Throughput), RetrievalError>
where
    Q: Borrow<EmbeddingSequence> + Sync,
    C: Borrow<EmbeddingSequence> + Sync,
{
    spec.validate().map_err(RetrievalError::Metric)?;
    if queries.is_empty() || candidates.is_empty() {
        return Err(RetrievalError::Empty);
    }
    check_normalized(queries).map_err(RetrievalError::Metric)?;
    check_normalized(candidates).map_err(RetrievalError::Metric)?;
    let qlang = queries[0].borrow().language().to_string();
    let clang = candidates[0].borrow().language().to_string();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers.max(1))
        .build()
        .map_err(|e| RetrievalError::ThreadPool(e.to_string()))?;

    let start = Instant::now();
    let rows: Vec<Result<Vec<f64>, (usize, MetricError)>> = pool.install(|| {
        let means = |seqs: &[&EmbeddingSequence]| -> Vec<Vec<f64>> { seqs.par_iter().map(|s| mean_frame(s)).collect() };
        let qs: Vec<&EmbeddingSequence> = queries.iter().map(Borrow::borrow).collect();
        let cs: Vec<&EmbeddingSequence> = candidates.iter().map(Borrow::borrow).collect();
        let (qmeans, cmeans) = if spec.kind == MetricKind::AvgSim {
            (means(&qs), means(&cs))
        } else {
            (Vec::new(), Vec::new())
        };
        qs.par_iter()
            .enumerate()
            .map(|(qi, q)| {
                cs.iter()
                    .enumerate()
                    .map(|(ci, c)| {
                        let m = (!qmeans.is_empty()).then(|| (qmeans[qi].as_slice(), cmeans[ci].as_slice()));
                        pair_score(q, c, m, spec).map_err(|e| (ci, e))
                    })
                    .collect()
            })
            .collect()
    });
    let elapsed_s = start.elapsed().as_secs_f64();

    let mut query_ids = Vec::with_capacity(queries.len());
    let mut data = Vec::with_capacity(queries.len() * candidates.len());
    let mut excluded = Vec::new();
    for (qi, row) in rows.into_iter().enumerate() {
        let q = queries[qi].borrow();
        match row {
            Ok(scores) => {
                query_ids.push(q.item_id().to_string());
                data.extend(scores);
            }
            Err((ci, source)) => {
                let candidate_id = candidates[ci].borrow().item_id().to_string();
                if !options.permissive {
                    return Err(RetrievalError::Pair {
                        query_id: q.item_id().to_string(),
                        candidate_id,
                        source,
                    });
                }
                excluded.push(PairFailure {
                    query_id: q.item_id().to_string(),
                    candidate_id,
                    error: source.to_string(),
                });
            }
        }
    }

    let pairs = queries.len() * candidates.len();
    let gram_flops = if spec.kind == MetricKind::AvgSim {
        0.0
    } else {
        let d = queries[0].borrow().dim() as f64;
        let tq: f64 = queries.iter().map(|q| q.borrow().len() as f64).sum();
        let tc: f64 = candidates.iter().map(|c| c.borrow().len() as f64).sum();
        2.0 * tq * tc * d
    };
    let stats = Throughput {
        pairs,
        elapsed_s,
        pairs_per_sec: if elapsed_s > 0.0 { pairs as f64 / elapsed_s } else { f64::INFINITY },
        gram_flops,
    };

    let candidate_ids = candidates.iter().map(|c| c.borrow().item_id().to_string()).collect();
    let n_rows = query_ids.len();
    let mut matrix = ScoreMatrix::new(
        qlang,
        clang,
        query_ids,
        candidate_ids,
        Matrix::from_vec(n_rows, candidates.len(), data),
        *spec,
    )?;
    matrix.excluded = excluded;
    Ok((matrix, stats))
}
