//! Immutable on-disk retrieval index and storage accounting.
//!
//! An index directory holds `manifest.json` (documents, vector counts,
//! offsets and provenance) and `vectors.bin` (see [`blob`]). Indexes are
//! written to a temporary sibling directory and renamed into place; an existing
//! index is never modified.

pub mod blob;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encode::EmbeddingVector;
use crate::error::{Error, Result};
use crate::fusion::{MultiVectorRecord, Provenance};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const VECTORS_FILE: &str = "vectors.bin";

/// Descriptive metadata carried in the manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IndexMeta {
    /// Representation name, e.g. `fused`, `s2m`, `chunk_type_mean`.
    pub variant: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Encoder spec used to build the index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocEntry {
    pub doc_id: String,
    pub k: usize,
    /// Row offset of the first vector in the blob.
    pub vector_offset: usize,
    pub provenance: Vec<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub format_version: u32,
    pub dim: usize,
    #[serde(flatten)]
    pub meta: IndexMeta,
    pub docs: Vec<DocEntry>,
}

impl IndexManifest {
    fn validate(&self, blob_rows: usize) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: self.format_version,
                expected: FORMAT_VERSION,
            });
        }
        let mut next = 0usize;
        let mut seen = HashSet::new();
        for doc in &self.docs {
            if doc.k == 0 || doc.provenance.len() != doc.k {
                return Err(Error::CorruptIndex(format!(
                    "doc {} declares k={} with {} provenance entries",
                    doc.doc_id,
                    doc.k,
                    doc.provenance.len()
                )));
            }
            if doc.vector_offset != next {
                return Err(Error::CorruptIndex(format!(
                    "doc {} offset {} does not follow previous rows (expected {next})",
                    doc.doc_id, doc.vector_offset
                )));
            }
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(Error::CorruptIndex(format!(
                    "duplicate doc id {}",
                    doc.doc_id
                )));
            }
            next += doc.k;
        }
        if next != blob_rows {
            return Err(Error::CorruptIndex(format!(
                "manifest covers {next} vectors, blob holds {blob_rows}"
            )));
        }
        Ok(())
    }
}

/// Read-only collection of multi-vector records backed by one flat matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalIndex {
    dim: usize,
    meta: IndexMeta,
    docs: Vec<DocEntry>,
    data: Vec<f32>,
}

impl RetrievalIndex {
    /// Builds an in-memory index. Records must be non-empty, share one
    /// dimension and have distinct doc ids.
    pub fn from_records(records: &[MultiVectorRecord], meta: IndexMeta) -> Result<Self> {
        let dim = records.first().ok_or(Error::EmptyIndex)?.dim();
        let mut seen = HashSet::new();
        let mut docs = Vec::with_capacity(records.len());
        let mut data = Vec::new();
        for record in records {
            if record.dim() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    actual: record.dim(),
                });
            }
            if !seen.insert(record.doc_id.as_str()) {
                return Err(Error::InvalidRequest(format!(
                    "duplicate doc id {}",
                    record.doc_id
                )));
            }
            docs.push(DocEntry {
                doc_id: record.doc_id.clone(),
                k: record.k(),
                vector_offset: data.len() / dim,
                provenance: record.provenance().to_vec(),
            });
            for v in record.vectors() {
                data.extend_from_slice(v.as_slice());
            }
        }
        Ok(Self {
            dim,
            meta,
            docs,
            data,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn meta(&self) -> &IndexMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn total_vectors(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn doc_id(&self, doc: usize) -> &str {
        &self.docs[doc].doc_id
    }

    pub fn k(&self, doc: usize) -> usize {
        self.docs[doc].k
    }

    pub fn provenance(&self, doc: usize) -> &[Provenance] {
        &self.docs[doc].provenance
    }

    pub fn find(&self, doc_id: &str) -> Option<usize> {
        self.docs.iter().position(|d| d.doc_id == doc_id)
    }

    pub fn row(&self, doc: usize, j: usize) -> &[f32] {
        let entry = &self.docs[doc];
        assert!(j < entry.k, "row {j} out of range for doc {}", entry.doc_id);
        let start = (entry.vector_offset + j) * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn rows(&self, doc: usize) -> std::slice::ChunksExact<'_, f32> {
        let entry = &self.docs[doc];
        let start = entry.vector_offset * self.dim;
        self.data[start..start + entry.k * self.dim].chunks_exact(self.dim)
    }

    pub fn record(&self, doc: usize) -> MultiVectorRecord {
        let entry = &self.docs[doc];
        MultiVectorRecord::from_parts_unchecked(
            entry.doc_id.clone(),
            self.rows(doc)
                .map(|r| EmbeddingVector::from_trusted(r.to_vec()))
                .collect(),
            entry.provenance.clone(),
        )
    }

    pub fn records(&self) -> Vec<MultiVectorRecord> {
        (0..self.len()).map(|d| self.record(d)).collect()
    }

    pub fn manifest(&self) -> IndexManifest {
        IndexManifest {
            format_version: FORMAT_VERSION,
            dim: self.dim,
            meta: self.meta.clone(),
            docs: self.docs.clone(),
        }
    }

    /// Writes the index to a new directory at `path`.
    pub fn save(&self, path: &Path) -> Result<IndexManifest> {
        if path.exists() {
            return Err(Error::IndexExists(path.to_path_buf()));
        }
        let staging = staging_dir(path);
        if staging.exists() {
            fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
        }
        fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;

        let manifest = self.manifest();
        let text =
            serde_json::to_string_pretty(&manifest).map_err(|e| Error::parse("manifest", e))?;
        let manifest_path = staging.join(MANIFEST_FILE);
        fs::write(&manifest_path, text + "\n").map_err(|e| Error::io(&manifest_path, e))?;
        blob::write_blob(&staging.join(VECTORS_FILE), self.dim, &self.data)?;
        fs::rename(&staging, path).map_err(|e| Error::io(path, e))?;
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let manifest_path = path.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: IndexManifest = serde_json::from_str(&text)
            .map_err(|e| Error::CorruptIndex(format!("manifest: {e}")))?;
        let blob = blob::read_blob(&path.join(VECTORS_FILE))?;
        if blob.dim != manifest.dim {
            return Err(Error::CorruptIndex(format!(
                "manifest dim {} but blob dim {}",
                manifest.dim, blob.dim
            )));
        }
        manifest.validate(blob.count())?;
        if manifest.docs.is_empty() {
            return Err(Error::EmptyIndex);
        }
        Ok(Self {
            dim: manifest.dim,
            meta: manifest.meta,
            docs: manifest.docs,
            data: blob.data,
        })
    }
}

fn staging_dir(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "index".into());
    path.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}

/// Saves records as an index at `path`.
pub fn save(records: &[MultiVectorRecord], meta: IndexMeta, path: &Path) -> Result<IndexManifest> {
    RetrievalIndex::from_records(records, meta)?.save(path)
}

pub fn load(path: &Path) -> Result<RetrievalIndex> {
    RetrievalIndex::load(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageStats {
    pub num_docs: usize,
    pub total_vectors: usize,
    pub avg_vectors_per_doc: f64,
    /// Exact size of the vector blob.
    pub total_bytes: u64,
    pub grid_baseline: usize,
    /// `1 - avg_vectors_per_doc / grid_baseline`.
    pub reduction_vs_grid: f64,
}

impl StorageStats {
    pub fn from_counts(ks: &[usize], dim: usize, grid_baseline: usize) -> Result<Self> {
        if grid_baseline == 0 {
            return Err(Error::InvalidConfig(
                "grid baseline must be at least 1".into(),
            ));
        }
        if ks.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let total_vectors: usize = ks.iter().sum();
        let avg = total_vectors as f64 / ks.len() as f64;
        Ok(Self {
            num_docs: ks.len(),
            total_vectors,
            avg_vectors_per_doc: avg,
            total_bytes: blob::encoded_len(dim, total_vectors),
            grid_baseline,
            reduction_vs_grid: 1.0 - avg / grid_baseline as f64,
        })
    }
}

pub fn storage_stats(index: &RetrievalIndex, grid_baseline: usize) -> Result<StorageStats> {
    let ks: Vec<usize> = index.docs.iter().map(|d| d.k).collect();
    StorageStats::from_counts(&ks, index.dim, grid_baseline)
}
