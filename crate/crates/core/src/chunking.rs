//! Patch-grid baselines: layout-guided pooling and layout-agnostic clustering.
//!
//! Layout-guided modes assign every grid patch to the region containing its
//! center (smallest region wins on overlap, patches outside every region are
//! discarded) and pool per region (`subimg_*`) or per content type
//! (`type_*`). `*_mean` emits one normalized mean per group; `*_cluster` runs
//! threshold-stopped average-linkage clustering inside each group. `semantic`
//! clusters all patches down to a fixed count.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encode::{normalize_f64, EmbeddingVector};
use crate::error::{Error, Result};
use crate::fusion::{MultiVectorRecord, Provenance};
use crate::layout::{BoundingBox, ContentType, LayoutRegion, PageGeometry};
use crate::scoring::dot;
use crate::{jsonl, store::blob};

#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    rows: u32,
    cols: u32,
    page: PageGeometry,
    vectors: Vec<EmbeddingVector>,
}

impl PatchGrid {
    /// `vectors` are row-major, `rows * cols` of them, all the same dimension.
    pub fn new(
        page: PageGeometry,
        rows: u32,
        cols: u32,
        vectors: Vec<EmbeddingVector>,
    ) -> Result<Self> {
        page.validate()?;
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidConfig(format!(
                "patch grid {rows}x{cols} is empty"
            )));
        }
        if vectors.len() != (rows * cols) as usize {
            return Err(Error::InvalidRequest(format!(
                "patch grid {rows}x{cols} needs {} vectors, got {}",
                rows * cols,
                vectors.len()
            )));
        }
        let dim = vectors[0].dim();
        if let Some(v) = vectors.iter().find(|v| v.dim() != dim) {
            return Err(Error::DimMismatch {
                expected: dim,
                actual: v.dim(),
            });
        }
        Ok(Self {
            rows,
            cols,
            page,
            vectors,
        })
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    pub fn page(&self) -> &PageGeometry {
        &self.page
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

    /// Pixel rectangle of patch `p` (row-major index).
    pub fn patch_rect(&self, p: usize) -> BoundingBox {
        let r = p as u64 / u64::from(self.cols);
        let c = p as u64 % u64::from(self.cols);
        let edge = |i: u64, n: u32, extent: u32| (i * u64::from(extent) / u64::from(n)) as f64;
        BoundingBox::new(
            edge(c, self.cols, self.page.width),
            edge(r, self.rows, self.page.height),
            edge(c + 1, self.cols, self.page.width),
            edge(r + 1, self.rows, self.page.height),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkMode {
    TypeMean,
    TypeCluster,
    SubimgMean,
    SubimgCluster,
    Semantic,
}

impl ChunkMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ChunkMode::TypeMean => "type_mean",
            ChunkMode::TypeCluster => "type_cluster",
            ChunkMode::SubimgMean => "subimg_mean",
            ChunkMode::SubimgCluster => "subimg_cluster",
            ChunkMode::Semantic => "semantic",
        }
    }
}

impl FromStr for ChunkMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.replace('-', "_");
        [
            ChunkMode::TypeMean,
            ChunkMode::TypeCluster,
            ChunkMode::SubimgMean,
            ChunkMode::SubimgCluster,
            ChunkMode::Semantic,
        ]
        .into_iter()
        .find(|m| m.as_str() == s)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown chunk mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkingConfig {
    pub mode: ChunkMode,
    pub semantic_k: usize,
    /// Cluster modes keep merging while the best pair is at least this similar.
    pub merge_threshold: f64,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            mode: ChunkMode::SubimgMean,
            semantic_k: 10,
            merge_threshold: 0.9,
        }
    }
}

impl ChunkingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.semantic_k == 0 {
            return Err(Error::InvalidConfig("semantic_k must be at least 1".into()));
        }
        if !(self.merge_threshold > -1.0 && self.merge_threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "merge_threshold must be in (-1, 1), got {}",
                self.merge_threshold
            )));
        }
        Ok(())
    }
}

/// For every patch, the position in `regions` of the region containing its
/// center, or `None` (discarded).
pub fn assign_patches(
    grid: &PatchGrid,
    page: &PageGeometry,
    regions: &[LayoutRegion],
) -> Result<Vec<Option<usize>>> {
    if grid.page != *page {
        return Err(Error::GeometryMismatch {
            grid: format!(
                "{} ({}x{})",
                grid.page.page_id, grid.page.width, grid.page.height
            ),
            regions: format!("{} ({}x{})", page.page_id, page.width, page.height),
        });
    }
    Ok((0..grid.len())
        .map(|p| {
            let rect = grid.patch_rect(p);
            let (cx, cy) = (rect.center_x(), rect.center_y());
            regions
                .iter()
                .enumerate()
                .filter(|(_, r)| r.bbox.contains(cx, cy))
                .min_by(|(ia, a), (ib, b)| a.bbox.area().total_cmp(&b.bbox.area()).then(ia.cmp(ib)))
                .map(|(i, _)| i)
        })
        .collect())
}

/// Output of [`chunk`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkOutput {
    pub record: MultiVectorRecord,
    /// Set when a layout-guided mode discarded every patch and the whole-page
    /// mean was emitted instead.
    pub whole_page_fallback: bool,
}

fn mean_vector(vectors: &[EmbeddingVector], members: &[usize]) -> EmbeddingVector {
    let dim = vectors[members[0]].dim();
    let mut acc = vec![0.0f64; dim];
    for &m in members {
        for (a, &x) in acc.iter_mut().zip(vectors[m].as_slice()) {
            *a += f64::from(x);
        }
    }
    let n = members.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    normalize_f64(&acc).unwrap_or_else(|_| {
        log::warn!("patch mean cancelled out; keeping patch {}", members[0]);
        vectors[members[0]].clone()
    })
}

/// How [`agglomerate`] decides when to stop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Merge while the best pair's average similarity is at least this.
    Threshold(f64),
    /// Merge until this many clusters remain.
    Count(usize),
}

/// Average-linkage agglomerative clustering by dot-product similarity.
///
/// `members` are indices into `vectors`, sorted ascending. Each step merges
/// the most similar pair; ties go to the lexicographically lowest pair of
/// cluster ids, where a cluster's id is its lowest member. Returns clusters
/// ordered by id, each with sorted members.
pub fn agglomerate(
    vectors: &[EmbeddingVector],
    members: &[usize],
    stop: StopRule,
) -> Vec<Vec<usize>> {
    let n = members.len();
    let mut clusters: Vec<Option<Vec<usize>>> = members.iter().map(|&m| Some(vec![m])).collect();
    let mut sim = vec![0.0f64; n * n];
    for a in 0..n {
        for b in (a + 1)..n {
            let s = dot(
                vectors[members[a]].as_slice(),
                vectors[members[b]].as_slice(),
            );
            sim[a * n + b] = s;
            sim[b * n + a] = s;
        }
    }
    let mut active = n;
    loop {
        if let StopRule::Count(target) = stop {
            if active <= target.max(1) {
                break;
            }
        }
        if active < 2 {
            break;
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..n {
            if clusters[a].is_none() {
                continue;
            }
            for b in (a + 1)..n {
                if clusters[b].is_none() {
                    continue;
                }
                let s = sim[a * n + b];
                if best.is_none_or(|(bs, _, _)| s > bs) {
                    best = Some((s, a, b));
                }
            }
        }
        let (s, a, b) = best.expect("at least two active clusters");
        if let StopRule::Threshold(t) = stop {
            if s < t {
                break;
            }
        }
        let merged = clusters[b].take().unwrap();
        let size_a = clusters[a].as_ref().unwrap().len() as f64;
        let size_b = merged.len() as f64;
        for c in 0..n {
            if c == a || clusters[c].is_none() {
                continue;
            }
            let updated = (size_a * sim[a * n + c] + size_b * sim[b * n + c]) / (size_a + size_b);
            sim[a * n + c] = updated;
            sim[c * n + a] = updated;
        }
        let target = clusters[a].as_mut().unwrap();
        target.extend(merged);
        target.sort_unstable();
        active -= 1;
    }
    clusters.into_iter().flatten().collect()
}

/// Builds a chunked record for `grid` guided by `regions` (reading order).
pub fn chunk(
    grid: &PatchGrid,
    page: &PageGeometry,
    regions: &[LayoutRegion],
    cfg: &ChunkingConfig,
) -> Result<ChunkOutput> {
    cfg.validate()?;
    let vectors = grid.vectors();
    let doc_id = page.page_id.clone();
    let all: Vec<usize> = (0..grid.len()).collect();

    if cfg.mode == ChunkMode::Semantic {
        let clusters = agglomerate(vectors, &all, StopRule::Count(cfg.semantic_k));
        return Ok(ChunkOutput {
            record: clusters_record(doc_id, vectors, &clusters, |c| Provenance::Patches {
                first_patch: c[0],
                count: c.len(),
            }),
            whole_page_fallback: false,
        });
    }

    let assignment = assign_patches(grid, page, regions)?;
    if assignment.iter().all(Option::is_none) {
        log::warn!("page {doc_id}: every patch discarded, emitting whole-page mean");
        let record = MultiVectorRecord::from_parts_unchecked(
            doc_id,
            vec![mean_vector(vectors, &all)],
            vec![Provenance::Patches {
                first_patch: 0,
                count: all.len(),
            }],
        );
        return Ok(ChunkOutput {
            record,
            whole_page_fallback: true,
        });
    }

    // groups in first-occurrence order: per region, or per content type
    let by_type = matches!(cfg.mode, ChunkMode::TypeMean | ChunkMode::TypeCluster);
    let mut group_keys: Vec<(usize, ContentType)> = Vec::new();
    let mut group_members: Vec<Vec<usize>> = Vec::new();
    let mut lookup: HashMap<(usize, ContentType), usize> = HashMap::new();
    for (r, region) in regions.iter().enumerate() {
        let key = if by_type {
            (usize::MAX, region.content_type)
        } else {
            (r, region.content_type)
        };
        lookup.entry(key).or_insert_with(|| {
            group_keys.push(key);
            group_members.push(Vec::new());
            group_keys.len() - 1
        });
    }
    for (p, slot) in assignment.iter().enumerate() {
        if let Some(r) = slot {
            let region = &regions[*r];
            let key = if by_type {
                (usize::MAX, region.content_type)
            } else {
                (*r, region.content_type)
            };
            group_members[lookup[&key]].push(p);
        }
    }

    let cluster = matches!(cfg.mode, ChunkMode::TypeCluster | ChunkMode::SubimgCluster);
    let mut out_vectors = Vec::new();
    let mut provenance = Vec::new();
    for (&(r, content_type), members) in group_keys.iter().zip(&group_members) {
        if members.is_empty() {
            continue;
        }
        let prov = if by_type {
            Provenance::ContentType { content_type }
        } else {
            Provenance::Region {
                region_index: regions[r].index,
                bbox: Some(regions[r].bbox),
                content_type: Some(content_type),
            }
        };
        if cluster {
            for c in agglomerate(vectors, members, StopRule::Threshold(cfg.merge_threshold)) {
                out_vectors.push(mean_vector(vectors, &c));
                provenance.push(prov.clone());
            }
        } else {
            out_vectors.push(mean_vector(vectors, members));
            provenance.push(prov);
        }
    }
    Ok(ChunkOutput {
        record: MultiVectorRecord::from_parts_unchecked(doc_id, out_vectors, provenance),
        whole_page_fallback: false,
    })
}

fn clusters_record(
    doc_id: String,
    vectors: &[EmbeddingVector],
    clusters: &[Vec<usize>],
    prov: impl Fn(&[usize]) -> Provenance,
) -> MultiVectorRecord {
    MultiVectorRecord::from_parts_unchecked(
        doc_id,
        clusters.iter().map(|c| mean_vector(vectors, c)).collect(),
        clusters.iter().map(|c| prov(c)).collect(),
    )
}

/// One line of the patch-grid manifest; rows are read from the companion
/// blob in manifest order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGridEntry {
    pub page_id: String,
    pub rows: u32,
    pub cols: u32,
    pub width: u32,
    pub height: u32,
}

/// Reads patch grids from a newline-delimited manifest plus a vector blob.
/// Patch vectors are normalized on load.
pub fn read_patch_grids(manifest: &Path, blob_path: &Path) -> Result<Vec<PatchGrid>> {
    let entries: Vec<PatchGridEntry> = jsonl::read(manifest)?;
    let blob = blob::read_blob(blob_path)?;
    let needed: usize = entries.iter().map(|e| (e.rows * e.cols) as usize).sum();
    if needed != blob.count() {
        return Err(Error::CorruptIndex(format!(
            "patch manifest needs {needed} vectors, blob holds {}",
            blob.count()
        )));
    }
    let mut rows = blob.data.chunks_exact(blob.dim);
    entries
        .into_iter()
        .map(|e| {
            let n = (e.rows * e.cols) as usize;
            let vectors = rows
                .by_ref()
                .take(n)
                .map(|r| EmbeddingVector::normalized(r.to_vec()))
                .collect::<Result<Vec<_>>>()?;
            PatchGrid::new(
                PageGeometry::new(e.page_id, e.width, e.height)?,
                e.rows,
                e.cols,
                vectors,
            )
        })
        .collect()
}
