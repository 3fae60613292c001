//! Single-file model persistence.
//!
//! A bundle is one JSON document holding every trained parameter, the word
//! vectors and lexicons the models read, the ensemble weights, the training
//! configuration and a fingerprint of the corpus it was trained on.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{serialize_corpus, NewsItem};
use crate::ensemble::{FrameworkWeights, Frameworks};
use crate::error::{Error, Result};
use crate::pipeline::{TrainConfig, ValidationAccuracy};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format_version: u32,
    /// Hex SHA-256 of the corpus in its canonical JSONL form.
    pub corpus_fingerprint: String,
    pub config: TrainConfig,
    pub validation_accuracy: ValidationAccuracy,
    pub weights: FrameworkWeights,
    pub frameworks: Frameworks,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

/// Fingerprint of a corpus; independent of the source file's formatting.
pub fn corpus_fingerprint(items: &[NewsItem]) -> String {
    let mut canonical = Vec::new();
    serialize_corpus(items, &mut canonical).expect("writing to memory cannot fail");
    hex::encode(Sha256::digest(&canonical))
}

impl ModelBundle {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        if bytes.iter().all(u8::is_ascii_whitespace) {
            return Err(Error::EmptyBundle);
        }
        let classify = |e: serde_json::Error| {
            if e.is_eof() {
                Error::TruncatedBundle
            } else {
                Error::Json(e)
            }
        };
        let probe: VersionProbe = serde_json::from_slice(bytes).map_err(classify)?;
        if probe.format_version != BUNDLE_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: probe.format_version,
                expected: BUNDLE_FORMAT_VERSION,
            });
        }
        let bundle: ModelBundle = serde_json::from_slice(bytes).map_err(classify)?;
        bundle.frameworks.validate()?;
        bundle.weights.validate()?;
        Ok(bundle)
    }

    /// Writes to a sibling temporary file first, so an interrupted save
    /// never leaves a half-written bundle under `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.frameworks.validate()?;
        let bytes = self.to_json()?;
        let tmp = path.with_extension("partial");
        let mut file = fs::File::create(&tmp)?;
        file.write_all(&bytes)?;
        file.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read(path)?)
    }

    pub fn matches_corpus(&self, items: &[NewsItem]) -> bool {
        self.corpus_fingerprint == corpus_fingerprint(items)
    }
}
