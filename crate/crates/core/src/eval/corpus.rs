//! Synthetic corpus where each query is answered by one region of one page.
//!
//! Every page draws `regions_per_doc * tokens_per_region` distinct content
//! tokens from a shared pool, so bags are disjoint within a page and overlap
//! at random across pages. The page-level bag is the union of its region bags
//! plus filler tokens sampled from a separate shared pool, which dilutes the
//! whole-page signal. Query `i` repeats the tokens of one seeded region of page
//! `i`.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Qrels, QueryRecord};
use crate::encode::{SyntheticPage, SyntheticRegion};
use crate::error::{Error, Result};
use crate::layout::{BoundingBox, DetectionRecord, DetectorPage};

pub const DEFAULT_CORPUS_DIM: usize = 256;

const PAGE_WIDTH: u32 = 1000;
const PAGE_HEIGHT: u32 = 1400;
/// Title, text, table, figure in the default category map.
const CATEGORY_CYCLE: [i64; 4] = [0, 1, 5, 3];

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub num_docs: usize,
    pub regions_per_doc: usize,
    /// Total token vocabulary, split into the filler pool and the content pool.
    pub vocab: usize,
    pub tokens_per_region: usize,
    pub filler_vocab: usize,
    pub filler_per_page: usize,
    pub seed: u64,
}

impl CorpusConfig {
    pub fn new(num_docs: usize, regions_per_doc: usize, vocab: usize, seed: u64) -> Self {
        Self {
            num_docs,
            regions_per_doc,
            vocab,
            tokens_per_region: 6,
            filler_vocab: 200,
            filler_per_page: 150,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.regions_per_doc < 2 {
            return Err(Error::InvalidConfig(format!(
                "regions_per_doc must be at least 2, got {}",
                self.regions_per_doc
            )));
        }
        if self.regions_per_doc > 20 {
            return Err(Error::InvalidConfig(format!(
                "regions_per_doc must be at most 20, got {}",
                self.regions_per_doc
            )));
        }
        if self.num_docs == 0 || self.tokens_per_region == 0 {
            return Err(Error::InvalidConfig(
                "num_docs and tokens_per_region must be positive".into(),
            ));
        }
        let needed = self.filler_vocab.max(usize::from(self.filler_per_page > 0))
            + self.regions_per_doc * self.tokens_per_region;
        if self.vocab < needed {
            return Err(Error::VocabTooSmall {
                needed,
                available: self.vocab,
            });
        }
        Ok(())
    }
}

/// Everything needed to run the pipeline end to end.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentratedCorpus {
    pub pages: Vec<SyntheticPage>,
    /// Detector output whose split order matches `region_index`.
    pub detections: Vec<DetectorPage>,
    pub queries: Vec<QueryRecord>,
    pub qrels: Qrels,
    /// For each query, the region of its relevant page that it was drawn from.
    pub target_regions: Vec<usize>,
}

fn token(i: usize) -> String {
    format!("w{i}")
}

fn band(r: usize, regions: usize) -> BoundingBox {
    let top = 100.0;
    let step = 1200.0 / regions as f64;
    BoundingBox::new(
        80.0,
        top + r as f64 * step,
        920.0,
        top + (r + 1) as f64 * step - 10.0,
    )
}

pub fn gen_concentrated_corpus(cfg: &CorpusConfig) -> Result<ConcentratedCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let filler: Vec<String> = (0..cfg.filler_vocab).map(token).collect();
    let content: Vec<usize> = (cfg.filler_vocab..cfg.vocab).collect();
    let per_doc = cfg.regions_per_doc * cfg.tokens_per_region;

    let mut pages = Vec::with_capacity(cfg.num_docs);
    let mut detections = Vec::with_capacity(cfg.num_docs);
    let mut queries = Vec::with_capacity(cfg.num_docs);
    let mut qrels = Qrels::new();
    let mut target_regions = Vec::with_capacity(cfg.num_docs);
    let width = cfg.num_docs.saturating_sub(1).to_string().len().max(4);

    for d in 0..cfg.num_docs {
        let page_id = format!("doc{d:0width$}");
        let drawn: Vec<String> = content
            .choose_multiple(&mut rng, per_doc)
            .map(|&i| token(i))
            .collect();
        let regions: Vec<SyntheticRegion> = drawn
            .chunks_exact(cfg.tokens_per_region)
            .enumerate()
            .map(|(r, bag)| SyntheticRegion {
                region_index: r,
                tokens: bag.to_vec(),
            })
            .collect();
        let mut page_tokens = drawn.clone();
        if !filler.is_empty() {
            page_tokens.extend(
                (0..cfg.filler_per_page).map(|_| filler[rng.random_range(0..filler.len())].clone()),
            );
        }
        page_tokens.shuffle(&mut rng);

        let target = rng.random_range(0..cfg.regions_per_doc);
        let query_id = format!("q{d:0width$}");
        queries.push(QueryRecord {
            query_id: query_id.clone(),
            text: regions[target].tokens.join(" "),
            tokens: None,
        });
        qrels.insert(&query_id, &page_id, 1)?;
        target_regions.push(target);

        detections.push(DetectorPage {
            page_id: page_id.clone(),
            width: PAGE_WIDTH,
            height: PAGE_HEIGHT,
            regions: (0..cfg.regions_per_doc)
                .map(|r| DetectionRecord {
                    bbox: band(r, cfg.regions_per_doc),
                    category_id: CATEGORY_CYCLE[r % CATEGORY_CYCLE.len()],
                    score: 0.9,
                })
                .collect(),
        });
        pages.push(SyntheticPage {
            page_id,
            regions,
            page_tokens,
        });
    }
    Ok(ConcentratedCorpus {
        pages,
        detections,
        queries,
        qrels,
        target_regions,
    })
}
