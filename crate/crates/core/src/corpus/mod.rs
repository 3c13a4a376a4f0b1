//! Embedding sequences, the ESEQ wire format, corpus manifests and the
//! frame-level preprocessing applied before scoring (padding trim, row
//! normalization, word-span pooling).

mod eseq;
mod manifest;
mod spans;

use std::ops::Range;
use std::path::PathBuf;

use thiserror::Error;

pub use eseq::{decode_sequence, encode_sequence, load_sequence, write_sequence, ESEQ_MAGIC, ESEQ_VERSION};
pub use manifest::{CorpusManifest, ManifestItem, UtteranceEntry, DEFAULT_FRAME_RATE_HZ, MANIFEST_VERSION};
pub use spans::{load_word_spans, validate_spans, WordSpan};

/// Tolerance used when converting seconds to frame indices, so that
/// `6.1 * 50.0 = 305.00000000000006` still maps to 305 frames.
const FRAME_INDEX_EPS: f64 = 1e-9;

/// Minimum Euclidean norm accepted for a frame.
pub const MIN_ROW_NORM: f64 = 1e-12;

/// Maximum deviation from 1 tolerated for rows of a normalized sequence.
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: Box<CorpusError>,
    },
    #[error("bad magic {found:?}, expected \"ESEQ\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported ESEQ version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("payload size mismatch: header declares T={frames}, d={dim} ({expected} bytes) but payload has {found} bytes")]
    SizeMismatch {
        frames: usize,
        dim: usize,
        expected: usize,
        found: usize,
    },
    #[error("empty sequence (T={frames}, d={dim})")]
    Empty { frames: usize, dim: usize },
    #[error("frame buffer of {values} values does not divide into rows of dim {dim}")]
    Shape { values: usize, dim: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("row {row} has zero norm")]
    ZeroNorm { row: usize },
    #[error("row {row} is flagged normalized but has norm {norm}")]
    NotUnit { row: usize, norm: f64 },
    #[error("frame rate must be positive, got {0}")]
    BadFrameRate(f64),
    #[error("audio duration must be positive, got {0}")]
    BadDuration(f64),
    #[error("trim requests {requested} frames but the sequence has only {available}")]
    TrimExceeds { requested: usize, available: usize },
    #[error("word span {index} ({word:?}): {reason}")]
    InvalidSpan {
        index: usize,
        word: String,
        reason: String,
    },
    #[error("average embedding of word {index} ({word:?}) has zero norm")]
    ZeroNormAverage { index: usize, word: String },
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("dimension mismatch: {expected} vs {found}")]
    DimMismatch { expected: usize, found: usize },
}

impl CorpusError {
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        match self {
            e @ (CorpusError::Io { .. } | CorpusError::File { .. }) => e,
            e => CorpusError::File {
                path: path.into(),
                source: Box::new(e),
            },
        }
    }
}

/// One utterance: `T` frames of dimension `d`, stored row-major as `f32`.
///
/// Immutable once constructed. Every constructor validates that all values
/// are finite and no row has (near) zero norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    item_id: String,
    language: String,
    frames: Vec<f32>,
    len: usize,
    dim: usize,
    normalized: bool,
    /// Exact inverse norms of the stored rows (empty unless normalized).
    inv_norms: Vec<f64>,
}

impl EmbeddingSequence {
    /// Builds a sequence from a row-major buffer of `T * dim` values.
    pub fn new(
        item_id: impl Into<String>,
        language: impl Into<String>,
        dim: usize,
        frames: Vec<f32>,
    ) -> Result<Self, CorpusError> {
        if dim == 0 || frames.is_empty() {
            return Err(CorpusError::Empty {
                frames: if dim == 0 { 0 } else { frames.len() / dim },
                dim,
            });
        }
        if !frames.len().is_multiple_of(dim) {
            return Err(CorpusError::Shape {
                values: frames.len(),
                dim,
            });
        }
        let seq = EmbeddingSequence {
            item_id: item_id.into(),
            language: language.into(),
            len: frames.len() / dim,
            frames,
            dim,
            normalized: false,
            inv_norms: Vec::new(),
        };
        seq.validate()?;
        Ok(seq)
    }

    /// Convenience constructor from explicit rows.
    pub fn from_rows<R: AsRef<[f32]>>(
        item_id: impl Into<String>,
        language: impl Into<String>,
        rows: &[R],
    ) -> Result<Self, CorpusError> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut frames = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(CorpusError::DimMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            frames.extend_from_slice(row);
        }
        Self::new(item_id, language, dim, frames)
    }

    fn validate(&self) -> Result<(), CorpusError> {
        for (row, values) in self.rows().enumerate() {
            if let Some(col) = values.iter().position(|v| !v.is_finite()) {
                return Err(CorpusError::NonFinite { row, col });
            }
            let norm = row_norm(values);
            if norm < MIN_ROW_NORM {
                return Err(CorpusError::ZeroNorm { row });
            }
            if self.normalized && (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(CorpusError::NotUnit { row, norm });
            }
        }
        Ok(())
    }

    pub fn item_id(&self) -> &str {
        &self.item_id
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    /// Number of frames `T`.
    pub fn len(&self) -> usize {
        self.len
    }

    /// Always false: sequences hold at least one frame.
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// `1 / |row|` for each stored row of a normalized sequence.
    ///
    /// Rows are stored as `f32`, so after normalization their norms are only
    /// within about 1e-7 of one. Scaling dot products by these factors turns
    /// them into cosines accurate to `f64` rounding, so that `cos(x, x) = 1`
    /// to within a few ulps. Empty for unnormalized sequences.
    pub fn inv_norms(&self) -> &[f64] {
        &self.inv_norms
    }

    /// Row-major frame buffer.
    pub fn frames(&self) -> &[f32] {
        &self.frames
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.frames[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.frames.chunks_exact(self.dim)
    }

    /// Replaces the identity metadata, keeping the frames.
    pub fn with_identity(mut self, item_id: impl Into<String>, language: impl Into<String>) -> Self {
        self.item_id = item_id.into();
        self.language = language.into();
        self
    }

    /// Scales every row to unit Euclidean norm. Norms are computed in `f64`.
    ///
    /// A sequence already flagged as normalized is returned unchanged, which
    /// makes the operation exactly idempotent.
    pub fn normalize_rows(self) -> Result<Self, CorpusError> {
        if self.normalized {
            return Ok(self);
        }
        let dim = self.dim;
        let mut frames = self.frames;
        for (row, values) in frames.chunks_exact_mut(dim).enumerate() {
            let norm = row_norm(values);
            if norm < MIN_ROW_NORM {
                return Err(CorpusError::ZeroNorm { row });
            }
            for v in values.iter_mut() {
                *v = (f64::from(*v) / norm) as f32;
            }
        }
        let inv_norms = frames
            .chunks_exact(dim)
            .map(|r| 1.0 / crate::metrics::dot(r, r).sqrt())
            .collect();
        Ok(EmbeddingSequence {
            frames,
            normalized: true,
            inv_norms,
            ..self
        })
    }

    /// Keeps the frames covering `audio_duration_s` seconds of real audio,
    /// i.e. the first `ceil(duration * rate)` rows.
    pub fn trim_padding(self, audio_duration_s: f64, frame_rate_hz: f64) -> Result<Self, CorpusError> {
        if !(audio_duration_s > 0.0) || !audio_duration_s.is_finite() {
            return Err(CorpusError::BadDuration(audio_duration_s));
        }
        check_frame_rate(frame_rate_hz)?;
        let keep = frames_for_duration(audio_duration_s, frame_rate_hz);
        if keep > self.len {
            return Err(CorpusError::TrimExceeds {
                requested: keep,
                available: self.len,
            });
        }
        let mut frames = self.frames;
        frames.truncate(keep * self.dim);
        let mut inv_norms = self.inv_norms;
        inv_norms.truncate(keep.min(inv_norms.len()));
        Ok(EmbeddingSequence {
            frames,
            len: keep,
            inv_norms,
            ..self
        })
    }

    /// Duration covered by the frames at the given rate.
    pub fn duration_s(&self, frame_rate_hz: f64) -> f64 {
        self.len as f64 / frame_rate_hz
    }

    /// Pools frames into one unit vector per word span.
    ///
    /// Span `[start, end)` seconds covers rows
    /// `floor(start * rate) .. max(floor(start * rate) + 1, ceil(end * rate))`;
    /// the mean of those rows is normalized afterwards.
    pub fn word_embeddings(
        &self,
        spans: &[WordSpan],
        frame_rate_hz: f64,
    ) -> Result<Vec<(String, Vec<f64>)>, CorpusError> {
        check_frame_rate(frame_rate_hz)?;
        validate_spans(spans, Some(self.duration_s(frame_rate_hz)))?;
        spans
            .iter()
            .enumerate()
            .map(|(index, span)| {
                let range = span_frames(span, frame_rate_hz);
                if range.end > self.len {
                    return Err(CorpusError::InvalidSpan {
                        index,
                        word: span.word.clone(),
                        reason: format!("maps to frames {range:?} beyond T={}", self.len),
                    });
                }
                let mut mean = vec![0.0f64; self.dim];
                for r in range.clone() {
                    let scale = self.inv_norms.get(r).copied().unwrap_or(1.0);
                    for (m, &v) in mean.iter_mut().zip(self.row(r)) {
                        *m += f64::from(v) * scale;
                    }
                }
                let count = range.len() as f64;
                mean.iter_mut().for_each(|m| *m /= count);
                let norm = mean.iter().map(|m| m * m).sum::<f64>().sqrt();
                if norm < MIN_ROW_NORM {
                    return Err(CorpusError::ZeroNormAverage {
                        index,
                        word: span.word.clone(),
                    });
                }
                mean.iter_mut().for_each(|m| *m /= norm);
                Ok((span.word.clone(), mean))
            })
            .collect()
    }
}

pub(crate) fn row_norm(values: &[f32]) -> f64 {
    values
        .iter()
        .map(|&v| {
            let v = f64::from(v);
            v * v
        })
        .sum::<f64>()
        .sqrt()
}

fn check_frame_rate(rate: f64) -> Result<(), CorpusError> {
    if rate > 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(CorpusError::BadFrameRate(rate))
    }
}

/// `ceil(duration * rate)`, tolerant to representation error in the product.
pub fn frames_for_duration(duration_s: f64, frame_rate_hz: f64) -> usize {
    (duration_s * frame_rate_hz - FRAME_INDEX_EPS).ceil().max(0.0) as usize
}

/// Half-open frame range covered by a word span (at least one frame).
pub fn span_frames(span: &WordSpan, frame_rate_hz: f64) -> Range<usize> {
    let lo = (span.start_s * frame_rate_hz + FRAME_INDEX_EPS).floor().max(0.0) as usize;
    let hi = (span.end_s * frame_rate_hz - FRAME_INDEX_EPS).ceil().max(0.0) as usize;
    lo..hi.max(lo + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(rows: &[[f32; 2]]) -> EmbeddingSequence {
        EmbeddingSequence::from_rows("a", "en", rows).unwrap()
    }

    #[test]
    fn normalize_three_four_five() {
        let s = seq(&[[3.0, 4.0]]).normalize_rows().unwrap();
        assert!(s.is_normalized());
        assert!((s.row(0)[0] - 0.6).abs() < 1e-7);
        assert!((s.row(0)[1] - 0.8).abs() < 1e-7);
    }

    #[test]
    fn normalize_unit_row_is_unchanged() {
        let s = seq(&[[1.0, 0.0]]).normalize_rows().unwrap();
        assert_eq!(s.row(0), &[1.0, 0.0]);
    }

    #[test]
    fn normalize_twice_is_exact() {
        let once = seq(&[[0.3, -1.7], [2.0, 9.0]]).normalize_rows().unwrap();
        let twice = once.clone().normalize_rows().unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn rejects_zero_row_and_nan() {
        assert!(matches!(
            EmbeddingSequence::from_rows("a", "en", &[[1.0f32, 0.0], [0.0, 0.0]]),
            Err(CorpusError::ZeroNorm { row: 1 })
        ));
        assert!(matches!(
            EmbeddingSequence::from_rows("a", "en", &[[1.0f32, f32::NAN]]),
            Err(CorpusError::NonFinite { row: 0, col: 1 })
        ));
        assert!(matches!(
            EmbeddingSequence::new("a", "en", 2, vec![]),
            Err(CorpusError::Empty { .. })
        ));
        assert!(matches!(
            EmbeddingSequence::new("a", "en", 2, vec![1.0; 3]),
            Err(CorpusError::Shape { .. })
        ));
    }

    fn long_seq(frames: usize) -> EmbeddingSequence {
        let data: Vec<f32> = (0..frames).flat_map(|i| [1.0, i as f32]).collect();
        EmbeddingSequence::new("x", "en", 2, data).unwrap()
    }

    #[test]
    fn trim_rounds_up() {
        assert_eq!(frames_for_duration(6.1, 50.0), 305);
        let t = long_seq(1500).trim_padding(6.1, 50.0).unwrap();
        assert_eq!(t.len(), 305);
        assert_eq!(t.row(304), &[1.0, 304.0]);
        assert_eq!(t.item_id(), "x");
    }

    #[test]
    fn trim_full_length_is_identity() {
        let s = long_seq(1500);
        assert_eq!(s.clone().trim_padding(30.0, 50.0).unwrap(), s);
    }

    #[test]
    fn trim_errors() {
        assert!(matches!(
            long_seq(100).trim_padding(30.0, 50.0),
            Err(CorpusError::TrimExceeds {
                requested: 1500,
                available: 100
            })
        ));
        assert!(matches!(
            long_seq(100).trim_padding(0.0, 50.0),
            Err(CorpusError::BadDuration(_))
        ));
        assert!(matches!(
            long_seq(100).trim_padding(1.0, -1.0),
            Err(CorpusError::BadFrameRate(_))
        ));
    }

    #[test]
    fn span_index_rule() {
        let span = WordSpan::new("w", 0.52, 0.98);
        assert_eq!(span_frames(&span, 50.0), 26..49);
        // A span shorter than one frame still covers one frame.
        let tiny = WordSpan::new("w", 0.500, 0.501);
        assert_eq!(span_frames(&tiny, 50.0), 25..26);
    }

    #[test]
    fn word_average_single_frame() {
        let s = seq(&[[1.0, 0.0], [0.0, 1.0]]);
        let spans = [WordSpan::new("b", 0.02, 0.04)];
        let out = s.word_embeddings(&spans, 50.0).unwrap();
        assert_eq!(out, vec![("b".to_string(), vec![0.0, 1.0])]);
    }

    #[test]
    fn word_average_matches_manual_mean() {
        let s = long_seq(60);
        let spans = [WordSpan::new("w", 0.52, 0.98)];
        let (_, v) = &s.word_embeddings(&spans, 50.0).unwrap()[0];
        // rows 26..49 are (1, i): mean is (1, 37)
        let n = (1.0f64 + 37.0 * 37.0).sqrt();
        assert!((v[0] - 1.0 / n).abs() < 1e-12);
        assert!((v[1] - 37.0 / n).abs() < 1e-12);
    }

    #[test]
    fn identical_spans_give_identical_vectors() {
        let s = long_seq(60);
        let spans = [WordSpan::new("a", 0.1, 0.3), WordSpan::new("a", 0.1, 0.3)];
        let out = s.word_embeddings(&spans, 50.0).unwrap();
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn span_beyond_duration_is_rejected() {
        let s = long_seq(10);
        let spans = [WordSpan::new("a", 0.1, 0.5)];
        assert!(matches!(
            s.word_embeddings(&spans, 50.0),
            Err(CorpusError::InvalidSpan { .. })
        ));
    }
}
