//! Encoder abstraction and adapters.
//!
//! An [`Encoder`] turns region crops, whole pages and query text into
//! fixed-dimension embeddings. Adapters return raw rows; [`encode`] and
//! [`encode_batch`] validate requests, check dimensions and L2-normalize, so
//! everything downstream can assume unit vectors.

pub mod file;
pub mod remote;
pub mod synthetic;

pub use file::FileEncoder;
pub use remote::RemoteEncoder;
pub use synthetic::{synthetic_embed, SyntheticEncoder, SyntheticPage, SyntheticRegion};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::BoundingBox;

/// Norms below this are treated as zero.
pub const MIN_NORM: f64 = 1e-12;

/// A dense embedding row. Components are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidRequest(format!(
                "non-finite component at position {pos}"
            )));
        }
        Ok(Self(values))
    }

    /// Builds from values already known to be finite (e.g. read from a
    /// checksummed blob).
    pub(crate) fn from_trusted(values: Vec<f32>) -> Self {
        Self(values)
    }

    /// Builds and L2-normalizes in one step.
    pub fn normalized(values: Vec<f32>) -> Result<Self> {
        normalize(&Self::new(values)?)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }
}

impl AsRef<[f32]> for EmbeddingVector {
    fn as_ref(&self) -> &[f32] {
        &self.0
    }
}

/// Scales `v` to unit L2 norm.
pub fn normalize(v: &EmbeddingVector) -> Result<EmbeddingVector> {
    normalize_f64(
        v.0.iter()
            .map(|&x| f64::from(x))
            .collect::<Vec<_>>()
            .as_slice(),
    )
}

/// Normalizes a row accumulated in double precision.
pub(crate) fn normalize_f64(values: &[f64]) -> Result<EmbeddingVector> {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(Error::InvalidRequest("non-finite vector".into()));
    }
    if norm < MIN_NORM {
        return Err(Error::DegenerateVector { norm });
    }
    Ok(EmbeddingVector(
        values.iter().map(|v| (v / norm) as f32).collect(),
    ))
}

/// The `N_q` token-level vectors of an encoded query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEmbedding {
    vectors: Vec<EmbeddingVector>,
}

impl QueryEmbedding {
    pub fn new(vectors: Vec<EmbeddingVector>) -> Result<Self> {
        let first = vectors
            .first()
            .ok_or_else(|| Error::InvalidRequest("query has no vectors".into()))?;
        let dim = first.dim();
        if let Some(bad) = vectors.iter().find(|v| v.dim() != dim) {
            return Err(Error::DimMismatch {
                expected: dim,
                actual: bad.dim(),
            });
        }
        Ok(Self { vectors })
    }

    pub fn single(vector: EmbeddingVector) -> Self {
        Self {
            vectors: vec![vector],
        }
    }

    pub fn vectors(&self) -> &[EmbeddingVector] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodeKind {
    Region,
    Page,
    Query,
}

/// What to encode. Use the constructors, which enforce the per-kind fields.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeRequest {
    pub kind: EncodeKind,
    /// Page locator: an id, path or URI depending on the adapter.
    pub image_ref: Option<String>,
    pub crop: Option<BoundingBox>,
    /// Reading-order index of the crop, used by adapters that key on it.
    pub region_index: Option<usize>,
    pub text: Option<String>,
    /// Stable query id, used by adapters that key on it.
    pub query_id: Option<String>,
}

impl EncodeRequest {
    pub fn region(image_ref: impl Into<String>, region_index: usize, crop: BoundingBox) -> Self {
        Self {
            kind: EncodeKind::Region,
            image_ref: Some(image_ref.into()),
            crop: Some(crop),
            region_index: Some(region_index),
            text: None,
            query_id: None,
        }
    }

    pub fn page(image_ref: impl Into<String>) -> Self {
        Self {
            kind: EncodeKind::Page,
            image_ref: Some(image_ref.into()),
            crop: None,
            region_index: None,
            text: None,
            query_id: None,
        }
    }

    pub fn query(text: impl Into<String>) -> Self {
        Self {
            kind: EncodeKind::Query,
            image_ref: None,
            crop: None,
            region_index: None,
            text: Some(text.into()),
            query_id: None,
        }
    }

    pub fn with_query_id(mut self, id: impl Into<String>) -> Self {
        self.query_id = Some(id.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            EncodeKind::Region => self.image_ref.is_some() && self.crop.is_some(),
            EncodeKind::Page => self.image_ref.is_some() && self.crop.is_none(),
            EncodeKind::Query => self.text.is_some(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidRequest(format!(
                "{:?} request is missing required fields",
                self.kind
            )))
        }
    }

    /// Lookup key used by keyed adapters: `page#index` for regions, the page
    /// ref for pages, the query id (or text) for queries.
    pub fn key(&self) -> String {
        let image = self.image_ref.as_deref().unwrap_or_default();
        match self.kind {
            EncodeKind::Region => match (self.region_index, self.crop) {
                (Some(i), _) => format!("{image}#{i}"),
                (None, Some(b)) => format!("{image}@{},{},{},{}", b.x1, b.y1, b.x2, b.y2),
                (None, None) => image.to_string(),
            },
            EncodeKind::Page => image.to_string(),
            EncodeKind::Query => self
                .query_id
                .clone()
                .or_else(|| self.text.clone())
                .unwrap_or_default(),
        }
    }
}

/// Raw adapter output for one request: one row for region/page requests,
/// one or more rows for queries.
pub type RawRows = Vec<Vec<f32>>;

/// An embedding backend. Implementations must be shareable across threads
/// and must return results in request order.
pub trait Encoder: Send + Sync {
    /// Output dimension of every row.
    fn dim(&self) -> usize;

    fn embed_raw(&self, requests: &[EncodeRequest]) -> Result<Vec<RawRows>>;
}

/// A normalized encoder output.
#[derive(Debug, Clone, PartialEq)]
pub enum Encoded {
    Vector(EmbeddingVector),
    Query(QueryEmbedding),
}

impl Encoded {
    pub fn into_vector(self) -> Option<EmbeddingVector> {
        match self {
            Encoded::Vector(v) => Some(v),
            Encoded::Query(_) => None,
        }
    }

    pub fn into_query(self) -> Option<QueryEmbedding> {
        match self {
            Encoded::Query(q) => Some(q),
            Encoded::Vector(_) => None,
        }
    }
}

pub fn encode(req: &EncodeRequest, adapter: &dyn Encoder) -> Result<Encoded> {
    Ok(encode_batch(std::slice::from_ref(req), adapter)?
        .pop()
        .expect("one output per request"))
}

pub fn encode_batch(requests: &[EncodeRequest], adapter: &dyn Encoder) -> Result<Vec<Encoded>> {
    for req in requests {
        req.validate()?;
    }
    let raw = adapter.embed_raw(requests)?;
    if raw.len() != requests.len() {
        return Err(Error::AdapterFailure(format!(
            "adapter returned {} outputs for {} requests",
            raw.len(),
            requests.len()
        )));
    }
    let dim = adapter.dim();
    requests
        .iter()
        .zip(raw)
        .map(|(req, rows)| {
            let mut vectors = Vec::with_capacity(rows.len());
            for row in rows {
                if row.len() != dim {
                    return Err(Error::DimMismatch {
                        expected: dim,
                        actual: row.len(),
                    });
                }
                vectors.push(EmbeddingVector::normalized(row)?);
            }
            match req.kind {
                EncodeKind::Query => Ok(Encoded::Query(QueryEmbedding::new(vectors)?)),
                _ if vectors.len() == 1 => Ok(Encoded::Vector(vectors.pop().unwrap())),
                _ => Err(Error::AdapterFailure(format!(
                    "expected one vector for {}, got {}",
                    req.key(),
                    vectors.len()
                ))),
            }
        })
        .collect()
}

/// Encodes region/page requests into single vectors.
pub fn encode_vectors(
    requests: &[EncodeRequest],
    adapter: &dyn Encoder,
) -> Result<Vec<EmbeddingVector>> {
    encode_batch(requests, adapter)?
        .into_iter()
        .map(|e| {
            e.into_vector()
                .ok_or_else(|| Error::InvalidRequest("expected a vector output".into()))
        })
        .collect()
}

/// Encodes a single query.
pub fn encode_query(
    text: &str,
    query_id: Option<&str>,
    adapter: &dyn Encoder,
) -> Result<QueryEmbedding> {
    let mut req = EncodeRequest::query(text);
    req.query_id = query_id.map(str::to_string);
    Ok(encode(&req, adapter)?
        .into_query()
        .expect("query request yields query output"))
}
