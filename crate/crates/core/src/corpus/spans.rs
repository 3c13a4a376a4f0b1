use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Word-level timestamp, in seconds from the start of the utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordSpan {
    pub word: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl WordSpan {
    pub fn new(word: impl Into<String>, start_s: f64, end_s: f64) -> Self {
        WordSpan {
            word: word.into(),
            start_s,
            end_s,
        }
    }
}

/// Checks `0 <= start < end`, ordering by start, and `end <= duration` when given.
pub fn validate_spans(spans: &[WordSpan], duration_s: Option<f64>) -> Result<(), CorpusError> {
    let mut prev_start = f64::NEG_INFINITY;
    for (index, span) in spans.iter().enumerate() {
        let fail = |reason: String| {
            Err(CorpusError::InvalidSpan {
                index,
                word: span.word.clone(),
                reason,
            })
        };
        if !(span.start_s >= 0.0) || !span.end_s.is_finite() {
            return fail(format!("start {} must be >= 0", span.start_s));
        }
        if !(span.end_s > span.start_s) {
            return fail(format!("end {} must exceed start {}", span.end_s, span.start_s));
        }
        if span.start_s < prev_start {
            return fail("spans must be sorted by start time".into());
        }
        if let Some(d) = duration_s {
            if span.end_s > d + 1e-9 {
                return fail(format!("end {} exceeds utterance duration {d}", span.end_s));
            }
        }
        prev_start = span.start_s;
    }
    Ok(())
}

/// Reads a JSON list of `{word, start_s, end_s}`.
pub fn load_word_spans(path: impl AsRef<Path>) -> Result<Vec<WordSpan>, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let spans: Vec<WordSpan> = serde_json::from_str(&text).map_err(|e| CorpusError::from(e).in_file(path))?;
    validate_spans(&spans, None).map_err(|e| e.in_file(path))?;
    Ok(spans)
}
