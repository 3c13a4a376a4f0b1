//! Batch scoring, argmax retrieval and recall@k over parallel corpora.

mod engine;
mod grid;
mod io;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::matrix::Matrix;
use crate::metrics::{MetricError, MetricSpec};

pub use engine::{score_all, ScoreOptions, Throughput};
pub use grid::{grid, load_pair, retrieve_pair, sweep, Grid, PairRun, SweepEntry};
pub use io::{report_csv, report_json, REPORT_CSV_HEADER};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("query {query_id:?} vs candidate {candidate_id:?}: {source}")]
    Pair {
        query_id: String,
        candidate_id: String,
        #[source]
        source: MetricError,
    },
    #[error(transparent)]
    Metric(MetricError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("no queries or no candidates to score")]
    Empty,
    #[error("score matrix is {rows}x{cols} but has {queries} query ids and {candidates} candidate ids")]
    Shape {
        rows: usize,
        cols: usize,
        queries: usize,
        candidates: usize,
    },
    #[error("non-finite score for query {query_id:?}, candidate {candidate_id:?}")]
    NonFiniteScore { query_id: String, candidate_id: String },
    #[error("no ground truth for query {0:?}")]
    MissingTruth(String),
    #[error("correct candidate {candidate_id:?} for query {query_id:?} is not among the candidates")]
    TruthNotCandidate { query_id: String, candidate_id: String },
    #[error("k = {k} is outside 1..={candidates}")]
    BadK { k: usize, candidates: usize },
    #[error("language {0:?} is not in the manifest")]
    LanguageMissing(String),
    #[error("no items have utterances in both {0:?} and {1:?}")]
    EmptyIntersection(String, String),
    #[error("at least two languages are needed for a grid")]
    TooFewLanguages,
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// A pair whose score could not be computed (permissive runs only).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairFailure {
    pub query_id: String,
    pub candidate_id: String,
    pub error: String,
}

/// `|Q| x |R|` similarity scores for one direction and metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub query_language: String,
    pub candidate_language: String,
    query_ids: Vec<String>,
    candidate_ids: Vec<String>,
    scores: Matrix,
    pub metric: MetricSpec,
    /// Queries dropped because one of their pairs failed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded: Vec<PairFailure>,
}

impl ScoreMatrix {
    pub fn new(
        query_language: impl Into<String>,
        candidate_language: impl Into<String>,
        query_ids: Vec<String>,
        candidate_ids: Vec<String>,
        scores: Matrix,
        metric: MetricSpec,
    ) -> Result<Self, RetrievalError> {
        if scores.rows() != query_ids.len() || scores.cols() != candidate_ids.len() {
            return Err(RetrievalError::Shape {
                rows: scores.rows(),
                cols: scores.cols(),
                queries: query_ids.len(),
                candidates: candidate_ids.len(),
            });
        }
        for q in 0..scores.rows() {
            if let Some(c) = scores.row(q).iter().position(|s| !s.is_finite()) {
                return Err(RetrievalError::NonFiniteScore {
                    query_id: query_ids[q].clone(),
                    candidate_id: candidate_ids[c].clone(),
                });
            }
        }
        Ok(ScoreMatrix {
            query_language: query_language.into(),
            candidate_language: candidate_language.into(),
            query_ids,
            candidate_ids,
            scores,
            metric,
            excluded: Vec::new(),
        })
    }

    pub fn query_ids(&self) -> &[String] {
        &self.query_ids
    }

    pub fn candidate_ids(&self) -> &[String] {
        &self.candidate_ids
    }

    pub fn scores(&self) -> &Matrix {
        &self.scores
    }

    pub fn get(&self, q: usize, r: usize) -> f64 {
        self.scores.get(q, r)
    }

    /// Applies `f` to every score (used to check rank invariance).
    pub fn map_scores(&self, f: impl Fn(f64) -> f64) -> Result<Self, RetrievalError> {
        let mut out = ScoreMatrix::new(
            self.query_language.clone(),
            self.candidate_language.clone(),
            self.query_ids.clone(),
            self.candidate_ids.clone(),
            self.scores.map(f),
            self.metric,
        )?;
        out.excluded = self.excluded.clone();
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query_id: String,
    pub correct_id: String,
    /// Best-first candidate ids, as many as the largest requested k.
    pub ranked: Vec<String>,
    /// 1-based rank of the correct candidate.
    pub rank_of_correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub query_language: String,
    pub candidate_language: String,
    pub metric: MetricSpec,
    pub candidates: usize,
    pub per_query: Vec<QueryResult>,
    /// k -> fraction of queries with the correct candidate in the top k.
    pub recall_at: BTreeMap<usize, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded: Vec<PairFailure>,
}

impl RetrievalReport {
    pub fn r_at(&self, k: usize) -> Option<f64> {
        self.recall_at.get(&k).copied()
    }

    pub fn r_at_1(&self) -> f64 {
        self.r_at(1).unwrap_or_else(|| self.recall_from_ranks(1))
    }

    /// Recall at any `k`, recomputed from the stored ranks.
    pub fn recall_from_ranks(&self, k: usize) -> f64 {
        if self.per_query.is_empty() {
            return 0.0;
        }
        let hits = self.per_query.iter().filter(|q| q.rank_of_correct <= k).count();
        hits as f64 / self.per_query.len() as f64
    }
}

/// Descending score, then ascending candidate index.
#[inline]
fn rank_order(scores: &[f64], a: usize, b: usize) -> Ordering {
    scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// Ranks candidates for every query and aggregates recall@k.
///
/// Higher scores rank first; exact ties go to the lower candidate index.
pub fn retrieve(
    matrix: &ScoreMatrix,
    truth: &HashMap<String, String>,
    ks: &[usize],
) -> Result<RetrievalReport, RetrievalError> {
    let n_cand = matrix.candidate_ids.len();
    for &k in ks {
        if k == 0 || k > n_cand {
            return Err(RetrievalError::BadK { k, candidates: n_cand });
        }
    }
    let top = ks.iter().copied().max().unwrap_or(1).min(n_cand);
    let index: HashMap<&str, usize> = matrix
        .candidate_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    let mut per_query = Vec::with_capacity(matrix.query_ids.len());
    let mut order: Vec<usize> = Vec::with_capacity(n_cand);
    for (qi, qid) in matrix.query_ids.iter().enumerate() {
        let correct_id = truth.get(qid).ok_or_else(|| RetrievalError::MissingTruth(qid.clone()))?;
        let &correct = index
            .get(correct_id.as_str())
            .ok_or_else(|| RetrievalError::TruthNotCandidate {
                query_id: qid.clone(),
                candidate_id: correct_id.clone(),
            })?;
        let scores = matrix.scores.row(qi);
        let rank_of_correct = 1 + (0..n_cand)
            .filter(|&r| rank_order(scores, r, correct) == Ordering::Less)
            .count();

        order.clear();
        order.extend(0..n_cand);
        if top < n_cand {
            order.select_nth_unstable_by(top - 1, |&a, &b| rank_order(scores, a, b));
            order.truncate(top);
        }
        order.sort_unstable_by(|&a, &b| rank_order(scores, a, b));
        per_query.push(QueryResult {
            query_id: qid.clone(),
            correct_id: correct_id.clone(),
            ranked: order.iter().map(|&r| matrix.candidate_ids[r].clone()).collect(),
            rank_of_correct,
        });
    }

    let n = per_query.len();
    let recall_at = ks
        .iter()
        .map(|&k| {
            let hits = per_query.iter().filter(|q| q.rank_of_correct <= k).count();
            (k, if n == 0 { 0.0 } else { hits as f64 / n as f64 })
        })
        .collect();
    Ok(RetrievalReport {
        query_language: matrix.query_language.clone(),
        candidate_language: matrix.candidate_language.clone(),
        metric: matrix.metric,
        candidates: n_cand,
        per_query,
        recall_at,
        excluded: matrix.excluded.clone(),
    })
}

/// Truth map where each query's answer is the candidate with the same id.
pub fn identity_truth<S: AsRef<str>>(ids: &[S]) -> HashMap<String, String> {
    ids.iter()
        .map(|id| (id.as_ref().to_string(), id.as_ref().to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[&[f64]]) -> ScoreMatrix {
        let n = rows.len();
        let m = rows[0].len();
        ScoreMatrix::new(
            "a",
            "b",
            (0..n).map(|i| format!("i{i}")).collect(),
            (0..m).map(|i| format!("i{i}")).collect(),
            Matrix::from_rows(rows),
            MetricSpec::default(),
        )
        .unwrap()
    }

    #[test]
    fn diagonal_dominance() {
        let m = matrix(&[&[0.9, 0.1], &[0.2, 0.8]]);
        let r = retrieve(&m, &identity_truth(m.query_ids()), &[1, 2]).unwrap();
        assert_eq!(r.r_at(1), Some(1.0));
        assert_eq!(r.r_at(2), Some(1.0));
        assert_eq!(r.per_query[1].ranked, vec!["i1", "i0"]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let rows = vec![vec![0.5; 5]; 5];
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let m = matrix(&refs);
        let r = retrieve(&m, &identity_truth(m.query_ids()), &[1]).unwrap();
        assert!(r.per_query.iter().all(|q| q.ranked == vec!["i0"]));
        assert_eq!(r.r_at(1), Some(0.2));
        let ranks: Vec<usize> = r.per_query.iter().map(|q| q.rank_of_correct).collect();
        assert_eq!(ranks, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn recall_is_monotone_and_complete() {
        let m = matrix(&[&[0.1, 0.9, 0.5], &[0.3, 0.2, 0.1], &[0.0, 0.0, 1.0]]);
        let r = retrieve(&m, &identity_truth(m.query_ids()), &[1, 2, 3]).unwrap();
        assert_eq!(r.r_at(1), Some(1.0 / 3.0));
        assert_eq!(r.r_at(2), Some(2.0 / 3.0));
        assert_eq!(r.r_at(3), Some(1.0));
        assert_eq!(r.per_query[0].rank_of_correct, 3);
    }

    #[test]
    fn errors() {
        let m = matrix(&[&[0.1, 0.9], &[0.3, 0.2]]);
        let truth = identity_truth(m.query_ids());
        assert!(matches!(retrieve(&m, &truth, &[0]), Err(RetrievalError::BadK { .. })));
        assert!(matches!(retrieve(&m, &truth, &[3]), Err(RetrievalError::BadK { .. })));
        let mut partial = truth.clone();
        partial.remove("i1");
        assert!(matches!(retrieve(&m, &partial, &[1]), Err(RetrievalError::MissingTruth(_))));
        let mut wrong = truth;
        wrong.insert("i0".into(), "zz".into());
        assert!(matches!(retrieve(&m, &wrong, &[1]), Err(RetrievalError::TruthNotCandidate { .. })));
        assert!(ScoreMatrix::new("a", "b", vec!["x".into()], vec!["y".into()], Matrix::from_rows(&[[f64::NAN]]), MetricSpec::default()).is_err());
    }

    #[test]
    fn single_candidate() {
        let m = matrix(&[&[0.3]]);
        let r = retrieve(&m, &identity_truth(m.query_ids()), &[1]).unwrap();
        assert_eq!(r.r_at_1(), 1.0);
    }
}
