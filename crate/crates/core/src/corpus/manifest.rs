use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

use super::{load_sequence, CorpusError, EmbeddingSequence};

pub const MANIFEST_VERSION: u32 = 1;
pub const DEFAULT_FRAME_RATE_HZ: f64 = 50.0;

fn default_frame_rate() -> f64 {
    DEFAULT_FRAME_RATE_HZ
}

/// Index of an n-way parallel corpus: content items x languages -> ESEQ files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub version: u32,
    #[serde(default = "default_frame_rate")]
    pub frame_rate_hz: f64,
    pub languages: Vec<String>,
    pub items: Vec<ManifestItem>,
    /// Free-form provenance written by whatever produced the corpus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
    #[serde(skip)]
    base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub id: String,
    #[serde(deserialize_with = "unique_keys")]
    pub utterances: BTreeMap<String, UtteranceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceEntry {
    /// Relative to the manifest's directory.
    pub path: String,
    pub frames: usize,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
}

// serde_json keeps the last value for a repeated key; a repeated language
// here means two utterances for one item, which is a corpus error.
fn unique_keys<'de, D>(de: D) -> Result<BTreeMap<String, UtteranceEntry>, D::Error>
where
    D: Deserializer<'de>,
{
    struct Unique;
    impl<'de> Visitor<'de> for Unique {
        type Value = BTreeMap<String, UtteranceEntry>;
        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a map from language code to utterance entry")
        }
        fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
            let mut out = BTreeMap::new();
            while let Some((lang, entry)) = access.next_entry::<String, UtteranceEntry>()? {
                if out.contains_key(&lang) {
                    return Err(serde::de::Error::custom(format!(
                        "duplicate utterance for language {lang:?}"
                    )));
                }
                out.insert(lang, entry);
            }
            Ok(out)
        }
    }
    de.deserialize_map(Unique)
}

impl CorpusManifest {
    pub fn new(frame_rate_hz: f64, languages: Vec<String>, items: Vec<ManifestItem>) -> Self {
        CorpusManifest {
            version: MANIFEST_VERSION,
            frame_rate_hz,
            languages,
            items,
            generator: None,
            base_dir: PathBuf::new(),
        }
    }

    /// Reads and validates a manifest; entry paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json_str(&text, base).map_err(|e| e.in_file(path))
    }

    pub fn from_json_str(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, CorpusError> {
        let mut manifest: CorpusManifest = serde_json::from_str(text)?;
        manifest.base_dir = base_dir.into();
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        fs::write(path, self.to_json_pretty()).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn set_base_dir(&mut self, dir: impl Into<PathBuf>) {
        self.base_dir = dir.into();
    }

    /// Shared embedding dimension, `None` for a manifest without entries.
    pub fn dim(&self) -> Option<usize> {
        self.items
            .iter()
            .flat_map(|it| it.utterances.values())
            .map(|u| u.dim)
            .next()
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |msg: String| Err(CorpusError::Manifest(msg));
        if self.version != MANIFEST_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        if !(self.frame_rate_hz > 0.0) || !self.frame_rate_hz.is_finite() {
            return bad(format!("frame_rate_hz must be positive, got {}", self.frame_rate_hz));
        }
        let mut langs = HashSet::new();
        for l in &self.languages {
            if !langs.insert(l.as_str()) {
                return bad(format!("language {l:?} listed twice"));
            }
        }
        let dim = self.dim();
        let mut ids = HashSet::new();
        for item in &self.items {
            if !ids.insert(item.id.as_str()) {
                return bad(format!("duplicate item id {:?}", item.id));
            }
            for (lang, entry) in &item.utterances {
                if !langs.contains(lang.as_str()) {
                    return bad(format!("item {:?} uses undeclared language {lang:?}", item.id));
                }
                if Some(entry.dim) != dim {
                    return bad(format!(
                        "item {:?} [{lang}] has dim {} but the corpus dim is {}",
                        item.id,
                        entry.dim,
                        dim.unwrap_or(0)
                    ));
                }
                if entry.frames == 0 || entry.dim == 0 {
                    return bad(format!("item {:?} [{lang}] is empty", item.id));
                }
                if let Some(d) = entry.duration_s {
                    if !(d > 0.0) || !d.is_finite() {
                        return bad(format!("item {:?} [{lang}] has duration {d}", item.id));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn item(&self, id: &str) -> Option<&ManifestItem> {
        self.items.iter().find(|it| it.id == id)
    }

    /// Item ids (in manifest order) that have an utterance in every listed language.
    pub fn items_with(&self, languages: &[&str]) -> Vec<&str> {
        self.items
            .iter()
            .filter(|it| languages.iter().all(|l| it.utterances.contains_key(*l)))
            .map(|it| it.id.as_str())
            .collect()
    }

    /// Loads one utterance, checks it against its entry, and trims padding
    /// frames when the entry records the audio duration.
    pub fn load_utterance(&self, item_id: &str, language: &str) -> Result<EmbeddingSequence, CorpusError> {
        let entry = self
            .item(item_id)
            .and_then(|it| it.utterances.get(language))
            .ok_or_else(|| CorpusError::Manifest(format!("no utterance for item {item_id:?} in {language:?}")))?;
        let path = self.base_dir.join(&entry.path);
        let check = || -> Result<EmbeddingSequence, CorpusError> {
            let seq = load_sequence(&path)?.with_identity(item_id, language);
            if seq.dim() != entry.dim {
                return Err(CorpusError::DimMismatch {
                    expected: entry.dim,
                    found: seq.dim(),
                });
            }
            if seq.len() != entry.frames {
                return Err(CorpusError::Manifest(format!(
                    "manifest lists {} frames, file has {}",
                    entry.frames,
                    seq.len()
                )));
            }
            match entry.duration_s {
                Some(d) => seq.trim_padding(d, self.frame_rate_hz),
                None => Ok(seq),
            }
        };
        check().map_err(|e| e.in_file(&path))
    }

    /// Loads the given items in one language, in the order given.
    pub fn load_language(&self, language: &str, item_ids: &[&str]) -> Result<Vec<EmbeddingSequence>, CorpusError> {
        item_ids.iter().map(|id| self.load_utterance(id, language)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"{
        "version": 1,
        "frame_rate_hz": 50.0,
        "languages": ["en", "fr"],
        "items": [
            {"id": "a", "utterances": {"en": {"path": "en/a.eseq", "frames": 3, "dim": 4},
                                       "fr": {"path": "fr/a.eseq", "frames": 5, "dim": 4, "duration_s": 0.1}}},
            {"id": "b", "utterances": {"en": {"path": "en/b.eseq", "frames": 2, "dim": 4}}}
        ]
    }"#;

    #[test]
    fn parses_and_queries() {
        let m = CorpusManifest::from_json_str(GOOD, "/tmp").unwrap();
        assert_eq!(m.dim(), Some(4));
        assert_eq!(m.items_with(&["en"]), vec!["a", "b"]);
        assert_eq!(m.items_with(&["en", "fr"]), vec!["a"]);
        let text = m.to_json_pretty();
        let again = CorpusManifest::from_json_str(&text, "/tmp").unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn default_frame_rate() {
        let m = CorpusManifest::from_json_str(r#"{"version":1,"languages":[],"items":[]}"#, "").unwrap();
        assert_eq!(m.frame_rate_hz, 50.0);
    }

    #[test]
    fn rejects_mixed_dims() {
        let text = GOOD.replace(r#""frames": 2, "dim": 4"#, r#""frames": 2, "dim": 8"#);
        let err = CorpusManifest::from_json_str(&text, "").unwrap_err();
        assert!(err.to_string().contains("dim 8"), "{err}");
    }

    #[test]
    fn rejects_duplicates_and_bad_rate() {
        let dup_id = GOOD.replace(r#""id": "b""#, r#""id": "a""#);
        assert!(CorpusManifest::from_json_str(&dup_id, "").is_err());
        let dup_lang = GOOD.replace(r#"{"en": {"path": "en/b.eseq", "frames": 2, "dim": 4}}"#,
            r#"{"en": {"path": "en/b.eseq", "frames": 2, "dim": 4}, "en": {"path": "x", "frames": 2, "dim": 4}}"#);
        assert!(CorpusManifest::from_json_str(&dup_lang, "").is_err());
        let rate = GOOD.replace("50.0", "0.0");
        assert!(CorpusManifest::from_json_str(&rate, "").is_err());
        let lang = GOOD.replace(r#"["en", "fr"]"#, r#"["en"]"#);
        assert!(CorpusManifest::from_json_str(&lang, "").is_err());
    }
}
