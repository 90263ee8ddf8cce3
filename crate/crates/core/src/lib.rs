//! Layout-aware multi-vector page retrieval.
//!
//! A page is split into reading-ordered layout regions, each region is
//! embedded and fused with the whole-page embedding, and queries are scored
//! against the resulting handful of vectors with MaxSim late interaction.
//!
//! - [`layout`]: detector output to ordered regions
//! - [`encode`]: embedding adapters
//! - [`fusion`]: per-page vector sets for every variant
//! - [`scoring`]: MaxSim, baselines and ranking
//! - [`chunking`]: patch-grid baselines
//! - [`store`]: on-disk index and storage accounting
//! - [`eval`]: qrels, runs, nDCG, attribution and the synthetic corpus

pub mod chunking;
pub mod encode;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod jsonl;
pub mod layout;
pub mod pipeline;
pub mod scoring;
pub mod store;

pub use encode::{EmbeddingVector, EncodeRequest, Encoder, QueryEmbedding};
pub use error::{Error, ErrorClass, Result};
pub use eval::{NdcgReport, Qrels, RunFile};
pub use fusion::{FusionConfig, MultiVectorRecord, Provenance, Variant};
pub use layout::{BoundingBox, ContentType, CropSpec, LayoutRegion, PageGeometry};
pub use scoring::{RelevanceScore, Scorer};
pub use store::{IndexManifest, RetrievalIndex, StorageStats};
