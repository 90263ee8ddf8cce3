//! Precomputed embeddings loaded from disk.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EncodeRequest, Encoder, RawRows};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::store::blob;

/// One line of the newline-delimited embedding file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingLine {
    pub id: String,
    pub vector: Vec<f32>,
}

/// Sidecar manifest naming the rows of a binary embedding blob, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSidecar {
    pub ids: Vec<String>,
}

/// Looks up stored vectors by [`EncodeRequest::key`].
#[derive(Debug, Clone)]
pub struct FileEncoder {
    dim: usize,
    vectors: HashMap<String, Vec<f32>>,
}

impl FileEncoder {
    pub fn from_entries(entries: impl IntoIterator<Item = (String, Vec<f32>)>) -> Result<Self> {
        let mut dim = None;
        let mut vectors = HashMap::new();
        for (id, vector) in entries {
            let expected = *dim.get_or_insert(vector.len());
            if vector.len() != expected {
                return Err(Error::DimMismatch {
                    expected,
                    actual: vector.len(),
                });
            }
            if vectors.insert(id.clone(), vector).is_some() {
                return Err(Error::parse("embeddings", format!("duplicate id {id}")));
            }
        }
        let dim = dim.ok_or_else(|| Error::parse("embeddings", "no vectors"))?;
        Ok(Self { dim, vectors })
    }

    /// Reads `{"id", "vector"}` lines.
    pub fn from_jsonl(path: &Path) -> Result<Self> {
        let lines: Vec<EmbeddingLine> = jsonl::read(path)?;
        Self::from_entries(lines.into_iter().map(|l| (l.id, l.vector)))
    }

    /// Reads a vector blob plus its JSON sidecar of ids.
    pub fn from_blob(blob_path: &Path, sidecar_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(sidecar_path).map_err(|e| Error::io(sidecar_path, e))?;
        let sidecar: BlobSidecar = serde_json::from_str(&text)
            .map_err(|e| Error::parse(sidecar_path.display().to_string(), e))?;
        let blob = blob::read_blob(blob_path)?;
        if blob.count() != sidecar.ids.len() {
            return Err(Error::CorruptIndex(format!(
                "sidecar lists {} ids but blob holds {} vectors",
                sidecar.ids.len(),
                blob.count()
            )));
        }
        let dim = blob.dim;
        Self::from_entries(
            sidecar
                .ids
                .into_iter()
                .zip(blob.data.chunks_exact(dim).map(<[f32]>::to_vec)),
        )
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl Encoder for FileEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_raw(&self, requests: &[EncodeRequest]) -> Result<Vec<RawRows>> {
        requests
            .iter()
            .map(|req| {
                let key = req.key();
                self.vectors
                    .get(&key)
                    .map(|v| vec![v.clone()])
                    .ok_or_else(|| Error::AdapterFailure(format!("no stored embedding for {key}")))
            })
            .collect()
    }
}
