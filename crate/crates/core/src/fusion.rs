//! Document representations built from region (local) and page (global)
//! embeddings.
//!
//! The default representation fuses each local vector with the page vector,
//! `normalize(alpha * global + (1 - alpha) * local)`, keeping one vector per
//! region. The layout-decomposed variants keep the locals as-is, average them
//! per content type, or append the global vector to the set.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encode::{normalize_f64, EmbeddingVector};
use crate::error::{Error, Result};
use crate::layout::{BoundingBox, ContentType};

/// Unit-norm tolerance for stored vectors.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

pub const DEFAULT_ALPHA: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Weighted global-local fusion, one vector per region.
    Fused,
    /// Raw region vectors.
    S2m,
    /// One averaged vector per content type.
    S2mTypeCluster,
    /// Region vectors plus the page vector.
    S2mGlobalInclusion,
    /// Page vector only (single-vector baseline).
    Single,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Fused,
        Variant::S2m,
        Variant::S2mTypeCluster,
        Variant::S2mGlobalInclusion,
        Variant::Single,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Fused => "fused",
            Variant::S2m => "s2m",
            Variant::S2mTypeCluster => "s2m_type_cluster",
            Variant::S2mGlobalInclusion => "s2m_global_inclusion",
            Variant::Single => "single",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    /// Weight of the global vector; only used by [`Variant::Fused`].
    pub alpha: f64,
    pub variant: Variant,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            variant: Variant::Fused,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "alpha must be in [0, 1], got {alpha}"
        )))
    }
}

/// Where a stored vector came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Region {
        region_index: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bbox: Option<BoundingBox>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        content_type: Option<ContentType>,
    },
    Global,
    ContentType {
        content_type: ContentType,
    },
    /// A cluster of patch-grid cells, identified by its lowest patch index.
    Patches {
        first_patch: usize,
        count: usize,
    },
}

impl Provenance {
    pub fn is_global(&self) -> bool {
        matches!(self, Provenance::Global)
    }
}

/// A document's stored vectors with aligned provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiVectorRecord {
    pub doc_id: String,
    vectors: Vec<EmbeddingVector>,
    provenance: Vec<Provenance>,
}

impl MultiVectorRecord {
    /// Checks `k >= 1`, uniform dimension, unit norms and aligned provenance.
    pub fn new(
        doc_id: impl Into<String>,
        vectors: Vec<EmbeddingVector>,
        provenance: Vec<Provenance>,
    ) -> Result<Self> {
        let doc_id = doc_id.into();
        let first = vectors
            .first()
            .ok_or_else(|| Error::InvalidRequest(format!("record {doc_id} has no vectors")))?;
        let dim = first.dim();
        if provenance.len() != vectors.len() {
            return Err(Error::InvalidRequest(format!(
                "record {doc_id}: {} vectors but {} provenance entries",
                vectors.len(),
                provenance.len()
            )));
        }
        for v in &vectors {
            if v.dim() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    actual: v.dim(),
                });
            }
            let norm = v.norm();
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::InvalidRequest(format!(
                    "record {doc_id}: vector norm {norm} is not unit"
                )));
            }
        }
        Ok(Self {
            doc_id,
            vectors,
            provenance,
        })
    }

    pub(crate) fn from_parts_unchecked(
        doc_id: String,
        vectors: Vec<EmbeddingVector>,
        provenance: Vec<Provenance>,
    ) -> Self {
        Self {
            doc_id,
            vectors,
            provenance,
        }
    }

    pub fn vectors(&self) -> &[EmbeddingVector] {
        &self.vectors
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn k(&self) -> usize {
        self.vectors.len()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].dim()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> + Clone {
        self.vectors.iter().map(EmbeddingVector::as_slice)
    }
}

/// A region embedding with the layout facts needed for provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalVector {
    pub region_index: usize,
    pub bbox: Option<BoundingBox>,
    pub content_type: Option<ContentType>,
    pub vector: EmbeddingVector,
}

impl LocalVector {
    fn provenance(&self) -> Provenance {
        Provenance::Region {
            region_index: self.region_index,
            bbox: self.bbox,
            content_type: self.content_type,
        }
    }
}

/// Output of [`fuse_locals`].
#[derive(Debug, Clone, PartialEq)]
pub struct FusedVectors {
    pub vectors: Vec<EmbeddingVector>,
    /// Positions where the fused sum vanished and the local vector was kept.
    pub fallbacks: Vec<usize>,
}

fn check_dims(vectors: &[EmbeddingVector], dim: usize) -> Result<()> {
    match vectors.iter().find(|v| v.dim() != dim) {
        Some(v) => Err(Error::DimMismatch {
            expected: dim,
            actual: v.dim(),
        }),
        None => Ok(()),
    }
}

/// Fuses every local vector with the global vector.
///
/// `alpha = 0` returns the locals bit-for-bit and `alpha = 1` returns copies of
/// the global vector. An exactly cancelling sum falls back to the local vector.
pub fn fuse_locals(
    locals: &[EmbeddingVector],
    global: &EmbeddingVector,
    alpha: f64,
) -> Result<FusedVectors> {
    check_alpha(alpha)?;
    if locals.is_empty() {
        return Err(Error::InvalidRequest(
            "fusion needs at least one local vector".into(),
        ));
    }
    check_dims(locals, global.dim())?;

    if alpha == 0.0 {
        return Ok(FusedVectors {
            vectors: locals.to_vec(),
            fallbacks: Vec::new(),
        });
    }
    if alpha == 1.0 {
        return Ok(FusedVectors {
            vectors: vec![global.clone(); locals.len()],
            fallbacks: Vec::new(),
        });
    }

    let mut vectors = Vec::with_capacity(locals.len());
    let mut fallbacks = Vec::new();
    let mut acc = vec![0.0f64; global.dim()];
    for (j, local) in locals.iter().enumerate() {
        for ((slot, &g), &l) in acc.iter_mut().zip(global.as_slice()).zip(local.as_slice()) {
            *slot = alpha * f64::from(g) + (1.0 - alpha) * f64::from(l);
        }
        match normalize_f64(&acc) {
            Ok(v) => vectors.push(v),
            Err(Error::DegenerateVector { .. }) => {
                log::warn!("fused vector {j} cancelled out at alpha={alpha}; keeping local");
                fallbacks.push(j);
                vectors.push(local.clone());
            }
            Err(e) => return Err(e),
        }
    }
    Ok(FusedVectors { vectors, fallbacks })
}

fn require_locals(doc_id: &str, locals: &[LocalVector]) -> Result<usize> {
    let first = locals
        .first()
        .ok_or_else(|| Error::InvalidRequest(format!("document {doc_id} has no regions")))?;
    let dim = first.vector.dim();
    for l in locals {
        if l.vector.dim() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                actual: l.vector.dim(),
            });
        }
    }
    Ok(dim)
}

pub fn build_fused(
    doc_id: &str,
    locals: &[LocalVector],
    global: &EmbeddingVector,
    alpha: f64,
) -> Result<MultiVectorRecord> {
    require_locals(doc_id, locals)?;
    let raw: Vec<EmbeddingVector> = locals.iter().map(|l| l.vector.clone()).collect();
    let fused = fuse_locals(&raw, global, alpha)?;
    Ok(MultiVectorRecord::from_parts_unchecked(
        doc_id.to_string(),
        fused.vectors,
        locals.iter().map(LocalVector::provenance).collect(),
    ))
}

pub fn build_s2m(doc_id: &str, locals: &[LocalVector]) -> Result<MultiVectorRecord> {
    require_locals(doc_id, locals)?;
    Ok(MultiVectorRecord::from_parts_unchecked(
        doc_id.to_string(),
        locals.iter().map(|l| l.vector.clone()).collect(),
        locals.iter().map(LocalVector::provenance).collect(),
    ))
}

/// One normalized mean per content type, types ordered by first occurrence.
/// Regions without a type are grouped under `other`.
pub fn build_s2m_type_cluster(doc_id: &str, locals: &[LocalVector]) -> Result<MultiVectorRecord> {
    let dim = require_locals(doc_id, locals)?;
    let mut order: Vec<ContentType> = Vec::new();
    let mut sums: Vec<(Vec<f64>, usize)> = Vec::new();
    for local in locals {
        let t = local.content_type.unwrap_or(ContentType::Other);
        let slot = match order.iter().position(|&o| o == t) {
            Some(i) => i,
            None => {
                order.push(t);
                sums.push((vec![0.0; dim], local.region_index));
                order.len() - 1
            }
        };
        for (acc, &x) in sums[slot].0.iter_mut().zip(local.vector.as_slice()) {
            *acc += f64::from(x);
        }
    }
    let mut vectors = Vec::with_capacity(order.len());
    for (t, (sum, first_region)) in order.iter().zip(&sums) {
        match normalize_f64(sum) {
            Ok(v) => vectors.push(v),
            Err(Error::DegenerateVector { .. }) => {
                log::warn!("doc {doc_id}: {t} mean cancelled out; keeping first member");
                let first = locals
                    .iter()
                    .find(|l| l.region_index == *first_region)
                    .expect("group has a first member");
                vectors.push(first.vector.clone());
            }
            Err(e) => return Err(e),
        }
    }
    Ok(MultiVectorRecord::from_parts_unchecked(
        doc_id.to_string(),
        vectors,
        order
            .into_iter()
            .map(|content_type| Provenance::ContentType { content_type })
            .collect(),
    ))
}

pub fn build_s2m_global_inclusion(
    doc_id: &str,
    locals: &[LocalVector],
    global: &EmbeddingVector,
) -> Result<MultiVectorRecord> {
    let dim = require_locals(doc_id, locals)?;
    if global.dim() != dim {
        return Err(Error::DimMismatch {
            expected: dim,
            actual: global.dim(),
        });
    }
    let mut vectors: Vec<EmbeddingVector> = locals.iter().map(|l| l.vector.clone()).collect();
    let mut provenance: Vec<Provenance> = locals.iter().map(LocalVector::provenance).collect();
    vectors.push(global.clone());
    provenance.push(Provenance::Global);
    Ok(MultiVectorRecord::from_parts_unchecked(
        doc_id.to_string(),
        vectors,
        provenance,
    ))
}

pub fn build_single(doc_id: &str, global: &EmbeddingVector) -> MultiVectorRecord {
    MultiVectorRecord::from_parts_unchecked(
        doc_id.to_string(),
        vec![global.clone()],
        vec![Provenance::Global],
    )
}

/// Builds the representation selected by `cfg`.
pub fn build_record(
    doc_id: &str,
    locals: &[LocalVector],
    global: &EmbeddingVector,
    cfg: &FusionConfig,
) -> Result<MultiVectorRecord> {
    cfg.validate()?;
    match cfg.variant {
        Variant::Fused => build_fused(doc_id, locals, global, cfg.alpha),
        Variant::S2m => build_s2m(doc_id, locals),
        Variant::S2mTypeCluster => build_s2m_type_cluster(doc_id, locals),
        Variant::S2mGlobalInclusion => build_s2m_global_inclusion(doc_id, locals, global),
        Variant::Single => Ok(build_single(doc_id, global)),
    }
}
