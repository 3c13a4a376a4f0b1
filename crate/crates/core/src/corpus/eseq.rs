//! ESEQ binary format.
//!
//! ```text
//! 0..4    magic "ESEQ"
//! 4..8    version, u32 LE (= 1)
//! 8..12   T, u32 LE
//! 12..16  d, u32 LE
//! 16..    T*d f32 LE, row-major
//! ```

use std::fs;
use std::path::Path;

use super::{CorpusError, EmbeddingSequence};

pub const ESEQ_MAGIC: [u8; 4] = *b"ESEQ";
pub const ESEQ_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub fn encode_sequence(seq: &EmbeddingSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + seq.frames().len() * 4);
    out.extend_from_slice(&ESEQ_MAGIC);
    out.extend_from_slice(&ESEQ_VERSION.to_le_bytes());
    out.extend_from_slice(&(seq.len() as u32).to_le_bytes());
    out.extend_from_slice(&(seq.dim() as u32).to_le_bytes());
    for v in seq.frames() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

/// Parses an ESEQ buffer. The result has `normalized = false`.
pub fn decode_sequence(
    bytes: &[u8],
    item_id: impl Into<String>,
    language: impl Into<String>,
) -> Result<EmbeddingSequence, CorpusError> {
    if bytes.len() < 4 {
        return Err(CorpusError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4-byte slice");
    if magic != ESEQ_MAGIC {
        return Err(CorpusError::BadMagic { found: magic });
    }
    if bytes.len() < HEADER_LEN {
        return Err(CorpusError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let version = read_u32(bytes, 4);
    if version != ESEQ_VERSION {
        return Err(CorpusError::UnsupportedVersion(version));
    }
    let frames = read_u32(bytes, 8) as usize;
    let dim = read_u32(bytes, 12) as usize;
    if frames == 0 || dim == 0 {
        return Err(CorpusError::Empty { frames, dim });
    }
    let expected = frames
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or(CorpusError::SizeMismatch {
            frames,
            dim,
            expected: usize::MAX,
            found: bytes.len() - HEADER_LEN,
        })?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(CorpusError::Truncated {
            expected: HEADER_LEN + expected,
            found: bytes.len(),
        });
    }
    if payload.len() > expected {
        return Err(CorpusError::SizeMismatch {
            frames,
            dim,
            expected,
            found: payload.len(),
        });
    }
    let values = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4-byte chunk")))
        .collect();
    EmbeddingSequence::new(item_id, language, dim, values)
}

/// Reads an ESEQ file. The item id defaults to the file stem; the language
/// is left empty (manifest loading fills both in).
pub fn load_sequence(path: impl AsRef<Path>) -> Result<EmbeddingSequence, CorpusError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_sequence(&bytes, stem, "").map_err(|e| e.in_file(path))
}

pub fn write_sequence(path: impl AsRef<Path>, seq: &EmbeddingSequence) -> Result<(), CorpusError> {
    let path = path.as_ref();
    fs::write(path, encode_sequence(seq)).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(magic: &[u8; 4], version: u32, t: u32, d: u32) -> Vec<u8> {
        let mut b = magic.to_vec();
        for v in [version, t, d] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    fn push_f32(b: &mut Vec<u8>, vals: &[f32]) {
        for v in vals {
            b.extend_from_slice(&v.to_le_bytes());
        }
    }

    #[test]
    fn hand_written_file_decodes() {
        let mut b = header(b"ESEQ", 1, 2, 2);
        push_f32(&mut b, &[1.0, 0.0, 0.0, 1.0]);
        let s = decode_sequence(&b, "id", "en").unwrap();
        assert_eq!((s.len(), s.dim()), (2, 2));
        assert_eq!(s.row(1), &[0.0, 1.0]);
        assert!(!s.is_normalized());
        assert_eq!(encode_sequence(&s), b);
    }

    #[test]
    fn bad_magic() {
        let mut b = header(b"XSEQ", 1, 1, 1);
        push_f32(&mut b, &[1.0]);
        assert!(matches!(
            decode_sequence(&b, "", ""),
            Err(CorpusError::BadMagic { found }) if &found == b"XSEQ"
        ));
    }

    #[test]
    fn bad_version() {
        let mut b = header(b"ESEQ", 2, 1, 1);
        push_f32(&mut b, &[1.0]);
        assert!(matches!(
            decode_sequence(&b, "", ""),
            Err(CorpusError::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn truncated_payload() {
        let mut b = header(b"ESEQ", 1, 3, 2);
        push_f32(&mut b, &[1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            decode_sequence(&b, "", ""),
            Err(CorpusError::Truncated { .. })
        ));
        assert!(matches!(
            decode_sequence(&b[..10], "", ""),
            Err(CorpusError::Truncated { .. })
        ));
    }

    #[test]
    fn trailing_bytes() {
        let mut b = header(b"ESEQ", 1, 1, 2);
        push_f32(&mut b, &[1.0, 0.0, 5.0]);
        assert!(matches!(
            decode_sequence(&b, "", ""),
            Err(CorpusError::SizeMismatch { .. })
        ));
    }

    #[test]
    fn names_offending_row() {
        let mut b = header(b"ESEQ", 1, 3, 2);
        push_f32(&mut b, &[1.0, 0.0, 0.0, 1.0, 0.0, f32::INFINITY]);
        let err = decode_sequence(&b, "", "").unwrap_err();
        assert!(matches!(err, CorpusError::NonFinite { row: 2, col: 1 }));
        assert!(err.to_string().contains("row 2"));

        let mut b = header(b"ESEQ", 1, 2, 2);
        push_f32(&mut b, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            decode_sequence(&b, "", ""),
            Err(CorpusError::ZeroNorm { row: 1 })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("utt7.eseq");
        let s = EmbeddingSequence::new("utt7", "", 3, vec![0.1, -2.5, 3e-7, 1.0, 1.0, 1.0]).unwrap();
        write_sequence(&path, &s).unwrap();
        assert_eq!(load_sequence(&path).unwrap(), s);
        let missing = load_sequence(dir.path().join("nope.eseq")).unwrap_err();
        assert!(matches!(missing, CorpusError::Io { .. }));
    }
}
