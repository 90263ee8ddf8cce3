//! Deterministic token-bag encoder.
//!
//! A bag is turned into a term-frequency vector over a hashed vocabulary of
//! `2^20` buckets and projected to `dim` dimensions by a Gaussian random
//! matrix whose columns are generated on demand from `(seed, bucket)`. Equal
//! bags give equal vectors; disjoint bags are near-orthogonal.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{normalize_f64, EmbeddingVector, EncodeKind, EncodeRequest, Encoder, RawRows};
use crate::error::{Error, Result};
use crate::jsonl;

const VOCAB_BITS: u32 = 20;

fn bucket(token: &str, seed: u64) -> u64 {
    let mut h = FnvHasher::default();
    h.write(&seed.to_le_bytes());
    h.write(token.as_bytes());
    h.finish() & ((1 << VOCAB_BITS) - 1)
}

fn projection_column(seed: u64, bucket: u64, dim: usize, out: &mut [f64], weight: f64) {
    let mut h = FnvHasher::default();
    h.write(&seed.to_le_bytes());
    h.write(&bucket.to_le_bytes());
    let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
    for slot in out.iter_mut().take(dim) {
        let g: f64 = rng.sample(StandardNormal);
        *slot += weight * g;
    }
}

/// Embeds a multiset of tokens. Token order does not matter.
pub fn synthetic_embed<S: AsRef<str>>(
    token_bag: &[S],
    seed: u64,
    dim: usize,
) -> Result<EmbeddingVector> {
    if dim < 2 {
        return Err(Error::InvalidConfig(format!(
            "synthetic dim must be at least 2, got {dim}"
        )));
    }
    if token_bag.is_empty() {
        return Err(Error::EmptyBag);
    }
    let mut tf: BTreeMap<u64, u32> = BTreeMap::new();
    for token in token_bag {
        *tf.entry(bucket(token.as_ref(), seed)).or_default() += 1;
    }
    let mut acc = vec![0.0f64; dim];
    for (&b, &count) in &tf {
        projection_column(seed, b, dim, &mut acc, f64::from(count));
    }
    normalize_f64(&acc)
}

/// One region of a synthetic corpus page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticRegion {
    pub region_index: usize,
    pub tokens: Vec<String>,
}

/// One line of the synthetic corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticPage {
    pub page_id: String,
    pub regions: Vec<SyntheticRegion>,
    pub page_tokens: Vec<String>,
}

/// Encoder over a synthetic corpus: regions and pages resolve to their token
/// bags, queries are whitespace-tokenized.
#[derive(Debug, Clone)]
pub struct SyntheticEncoder {
    seed: u64,
    dim: usize,
    regions: HashMap<(String, usize), Vec<String>>,
    pages: HashMap<String, Vec<String>>,
}

impl SyntheticEncoder {
    /// Query-only encoder with no corpus attached.
    pub fn new(seed: u64, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidConfig(format!(
                "synthetic dim must be at least 2, got {dim}"
            )));
        }
        Ok(Self {
            seed,
            dim,
            regions: HashMap::new(),
            pages: HashMap::new(),
        })
    }

    pub fn with_corpus(seed: u64, dim: usize, corpus: &[SyntheticPage]) -> Result<Self> {
        let mut enc = Self::new(seed, dim)?;
        for page in corpus {
            for region in &page.regions {
                enc.regions.insert(
                    (page.page_id.clone(), region.region_index),
                    region.tokens.clone(),
                );
            }
            enc.pages
                .insert(page.page_id.clone(), page.page_tokens.clone());
        }
        Ok(enc)
    }

    pub fn from_corpus_file(seed: u64, dim: usize, path: &Path) -> Result<Self> {
        let corpus: Vec<SyntheticPage> = jsonl::read(path)?;
        Self::with_corpus(seed, dim, &corpus)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn bag_for(&self, req: &EncodeRequest) -> Result<Vec<String>> {
        let image = req.image_ref.as_deref().unwrap_or_default();
        match req.kind {
            EncodeKind::Region => {
                let index = req.region_index.ok_or_else(|| {
                    Error::AdapterFailure(format!(
                        "synthetic encoder needs a region index for {image}"
                    ))
                })?;
                self.regions
                    .get(&(image.to_string(), index))
                    .cloned()
                    .ok_or_else(|| {
                        Error::AdapterFailure(format!("no synthetic region {image}#{index}"))
                    })
            }
            EncodeKind::Page => self
                .pages
                .get(image)
                .cloned()
                .ok_or_else(|| Error::AdapterFailure(format!("no synthetic page {image}"))),
            EncodeKind::Query => Ok(req
                .text
                .as_deref()
                .unwrap_or_default()
                .split_whitespace()
                .map(str::to_string)
                .collect()),
        }
    }
}

impl Encoder for SyntheticEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_raw(&self, requests: &[EncodeRequest]) -> Result<Vec<RawRows>> {
        requests
            .iter()
            .map(|req| {
                let bag = self.bag_for(req)?;
                let v = synthetic_embed(&bag, self.seed, self.dim)?;
                Ok(vec![v.into_inner()])
            })
            .collect()
    }
}
