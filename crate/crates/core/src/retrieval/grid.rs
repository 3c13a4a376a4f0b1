use std::borrow::Borrow;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusManifest, EmbeddingSequence};
use crate::metrics::MetricSpec;

use super::{identity_truth, retrieve, score_all, RetrievalError, RetrievalReport, ScoreOptions, Throughput};

/// Result of one retrieval direction plus its scoring throughput.
#[derive(Debug, Clone)]
pub struct PairRun {
    pub report: RetrievalReport,
    pub throughput: Throughput,
}

fn check_language(manifest: &CorpusManifest, lang: &str) -> Result<(), RetrievalError> {
    if manifest.languages.iter().any(|l| l == lang) {
        Ok(())
    } else {
        Err(RetrievalError::LanguageMissing(lang.to_string()))
    }
}

/// Loads and normalizes the items present in both languages, in manifest order.
pub fn load_pair(
    manifest: &CorpusManifest,
    query_language: &str,
    candidate_language: &str,
) -> Result<(Vec<EmbeddingSequence>, Vec<EmbeddingSequence>), RetrievalError> {
    check_language(manifest, query_language)?;
    check_language(manifest, candidate_language)?;
    let ids = manifest.items_with(&[query_language, candidate_language]);
    if ids.is_empty() {
        return Err(RetrievalError::EmptyIntersection(
            query_language.to_string(),
            candidate_language.to_string(),
        ));
    }
    let load = |lang: &str| -> Result<Vec<EmbeddingSequence>, RetrievalError> {
        ids.iter()
            .map(|id| Ok(manifest.load_utterance(id, lang)?.normalize_rows()?))
            .collect()
    };
    Ok((load(query_language)?, load(candidate_language)?))
}

/// Retrieval in one direction: queries in `query_language`, candidates in
/// `candidate_language`, truth = same item id.
pub fn retrieve_pair(
    manifest: &CorpusManifest,
    query_language: &str,
    candidate_language: &str,
    spec: &MetricSpec,
    options: &ScoreOptions,
    ks: &[usize],
) -> Result<PairRun, RetrievalError> {
    let (queries, candidates) = load_pair(manifest, query_language, candidate_language)?;
    score_and_retrieve(&queries, &candidates, spec, options, ks)
}

fn score_and_retrieve<Q, C>(
    queries: &[Q],
    candidates: &[C],
    spec: &MetricSpec,
    options: &ScoreOptions,
    ks: &[usize],
) -> Result<PairRun, RetrievalError>
where
    Q: Borrow<EmbeddingSequence> + Sync,
    C: Borrow<EmbeddingSequence> + Sync,
{
    let (matrix, throughput) = score_all(queries, candidates, spec, options)?;
    let truth = identity_truth(matrix.candidate_ids());
    let report = retrieve(&matrix, &truth, ks)?;
    Ok(PairRun { report, throughput })
}

/// Retrieval reports for every ordered pair of distinct languages.
#[derive(Debug, Clone)]
pub struct Grid {
    pub languages: Vec<String>,
    pub metric: MetricSpec,
    /// Keyed by (query language, candidate language).
    pub cells: BTreeMap<(String, String), RetrievalReport>,
}

impl Grid {
    pub fn get(&self, query_language: &str, candidate_language: &str) -> Option<&RetrievalReport> {
        self.cells
            .get(&(query_language.to_string(), candidate_language.to_string()))
    }

    /// R@1 table in language order, `None` on the diagonal.
    pub fn r_at_1_rows(&self) -> Vec<Vec<Option<f64>>> {
        self.languages
            .iter()
            .map(|a| {
                self.languages
                    .iter()
                    .map(|b| self.get(a, b).map(RetrievalReport::r_at_1))
                    .collect()
            })
            .collect()
    }
}

/// Full query-language x candidate-language grid. Each language's
/// utterances are loaded and normalized once.
pub fn grid(
    manifest: &CorpusManifest,
    languages: &[&str],
    spec: &MetricSpec,
    options: &ScoreOptions,
    ks: &[usize],
) -> Result<Grid, RetrievalError> {
    if languages.len() < 2 {
        return Err(RetrievalError::TooFewLanguages);
    }
    for l in languages {
        check_language(manifest, l)?;
    }
    let mut cache: HashMap<&str, HashMap<String, EmbeddingSequence>> = HashMap::new();
    for &lang in languages {
        let mut loaded = HashMap::new();
        for item in &manifest.items {
            let used = item.utterances.contains_key(lang)
                && languages.iter().any(|o| *o != lang && item.utterances.contains_key(*o));
            if used {
                let seq = manifest.load_utterance(&item.id, lang)?.normalize_rows()?;
                loaded.insert(item.id.clone(), seq);
            }
        }
        cache.insert(lang, loaded);
    }

    let mut cells = BTreeMap::new();
    for &a in languages {
        for &b in languages {
            if a == b {
                continue;
            }
            let ids = manifest.items_with(&[a, b]);
            if ids.is_empty() {
                return Err(RetrievalError::EmptyIntersection(a.to_string(), b.to_string()));
            }
            let queries: Vec<&EmbeddingSequence> = ids.iter().map(|id| &cache[a][*id]).collect();
            let candidates: Vec<&EmbeddingSequence> = ids.iter().map(|id| &cache[b][*id]).collect();
            let run = score_and_retrieve(&queries, &candidates, spec, options, ks)?;
            cells.insert((a.to_string(), b.to_string()), run.report);
        }
    }
    Ok(Grid {
        languages: languages.iter().map(|s| s.to_string()).collect(),
        metric: *spec,
        cells,
    })
}

/// One labeled point of a layer / model-size sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub label: String,
    pub r_at_1: Option<f64>,
    pub error: Option<String>,
}

/// R@1 for the same language pair over several manifests, in input order.
/// A failing manifest is recorded and the sweep moves on.
pub fn sweep(
    manifests: &[(String, CorpusManifest)],
    query_language: &str,
    candidate_language: &str,
    spec: &MetricSpec,
    options: &ScoreOptions,
) -> Vec<SweepEntry> {
    manifests
        .iter()
        .map(|(label, manifest)| {
            match retrieve_pair(manifest, query_language, candidate_language, spec, options, &[1]) {
                Ok(run) => SweepEntry {
                    label: label.clone(),
                    r_at_1: Some(run.report.r_at_1()),
                    error: None,
                },
                Err(e) => SweepEntry {
                    label: label.clone(),
                    r_at_1: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}
