//! Versioned checkpoint container. Every trained system persists as a JSON
//! envelope carrying the vocabulary fingerprint; loading rejects a checkpoint
//! whose vocabulary differs from the artifacts it is asked to run against.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::Matrix;

pub const CHECKPOINT_VERSION: u32 = 1;

/// One named parameter with its shape, flattened row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn from_matrix(name: &str, m: &Matrix) -> NamedTensor {
        NamedTensor {
            name: name.to_string(),
            rows: m.rows(),
            cols: m.cols(),
            data: m.data().to_vec(),
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(self.rows, self.cols, self.data.clone())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub format_version: u32,
    /// Which system produced this checkpoint: `seq`, `cf`, `mf`, or `ngram`.
    pub kind: String,
    pub vocab_hash: String,
    pub payload: T,
}

pub fn save_envelope<T: Serialize>(
    path: &Path,
    kind: &str,
    vocab_hash: &str,
    payload: &T,
) -> Result<()> {
    let envelope = Envelope {
        format_version: CHECKPOINT_VERSION,
        kind: kind.to_string(),
        vocab_hash: vocab_hash.to_string(),
        payload,
    };
    let json = serde_json::to_string(&envelope).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

/// Loads and validates an envelope. `expected_vocab_hash = None` skips the
/// vocabulary check (used by tooling that only inspects a checkpoint).
pub fn load_envelope<T: DeserializeOwned>(
    path: &Path,
    kind: &str,
    expected_vocab_hash: Option<&str>,
) -> Result<Envelope<T>> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            path: path.to_path_buf(),
        });
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let envelope: Envelope<T> =
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    if envelope.format_version != CHECKPOINT_VERSION {
        return Err(Error::Invalid(format!(
            "checkpoint {} has format version {}, this build reads {}",
            path.display(),
            envelope.format_version,
            CHECKPOINT_VERSION
        )));
    }
    if envelope.kind != kind {
        return Err(Error::Invalid(format!(
            "checkpoint {} holds a `{}` model, expected `{kind}`",
            path.display(),
            envelope.kind
        )));
    }
    if let Some(expected) = expected_vocab_hash {
        if envelope.vocab_hash != expected {
            return Err(Error::VocabHashMismatch {
                expected: expected.to_string(),
                found: envelope.vocab_hash,
            });
        }
    }
    Ok(envelope)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_tensor_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt.json");
        let m = Matrix::from_vec(2, 3, vec![0.1, -2.5e-17, 3.0, f64::MIN_POSITIVE, 1.0, -0.0]);
        let tensors = vec![NamedTensor::from_matrix("w", &m)];
        save_envelope(&path, "seq", "abcd", &tensors).unwrap();
        let loaded: Envelope<Vec<NamedTensor>> =
            load_envelope(&path, "seq", Some("abcd")).unwrap();
        assert_eq!(loaded.payload[0].to_matrix(), m);
    }

    #[test]
    fn vocabulary_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt.json");
        save_envelope(&path, "seq", "aaaa", &Vec::<NamedTensor>::new()).unwrap();
        let err = load_envelope::<Vec<NamedTensor>>(&path, "seq", Some("bbbb")).unwrap_err();
        assert!(matches!(err, Error::VocabHashMismatch { .. }));
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt.json");
        save_envelope(&path, "mf", "aaaa", &Vec::<NamedTensor>::new()).unwrap();
        assert!(load_envelope::<Vec<NamedTensor>>(&path, "seq", None).is_err());
    }

    #[test]
    fn missing_file_reports_missing_artifact() {
        let err =
            load_envelope::<Vec<NamedTensor>>(Path::new("/nonexistent/x.json"), "seq", None)
                .unwrap_err();
        assert!(matches!(err, Error::MissingArtifact { .. }));
    }
}
