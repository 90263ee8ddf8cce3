//! Seeded fixtures shared by the benchmarks.

use layoutvec::fusion::{build_fused, LocalVector};
use layoutvec::layout::{BoundingBox, DetectionRecord};
use layoutvec::{EmbeddingVector, MultiVectorRecord, QueryEmbedding, RetrievalIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_unit<R: Rng>(rng: &mut R, dim: usize) -> EmbeddingVector {
    let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    EmbeddingVector::normalized(v).expect("random vector is not degenerate")
}

pub fn random_query(seed: u64, tokens: usize, dim: usize) -> QueryEmbedding {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    QueryEmbedding::new((0..tokens).map(|_| random_unit(&mut rng, dim)).collect())
        .expect("non-empty query")
}

/// Fused records with `k` regions each.
pub fn random_records(seed: u64, docs: usize, k: usize, dim: usize) -> Vec<MultiVectorRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..docs)
        .map(|d| {
            let global = random_unit(&mut rng, dim);
            let locals: Vec<LocalVector> = (0..k)
                .map(|i| LocalVector {
                    region_index: i,
                    bbox: None,
                    content_type: None,
                    vector: random_unit(&mut rng, dim),
                })
                .collect();
            build_fused(&format!("doc{d:05}"), &locals, &global, 0.7).expect("valid fusion")
        })
        .collect()
}

pub fn random_index(seed: u64, docs: usize, k: usize, dim: usize) -> RetrievalIndex {
    RetrievalIndex::from_records(&random_records(seed, docs, k, dim), Default::default())
        .expect("valid index")
}

/// Random detections on a `width x height` page.
pub fn random_detections(seed: u64, n: usize, width: f64, height: f64) -> Vec<DetectionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x1 = rng.random_range(0.0..width * 0.9);
            let y1 = rng.random_range(0.0..height * 0.9);
            let x2 = rng.random_range(x1 + 1.0..width);
            let y2 = rng.random_range(y1 + 1.0..height);
            DetectionRecord {
                bbox: BoundingBox::new(x1, y1, x2, y2),
                category_id: rng.random_range(0..10),
                score: 0.9,
            }
        })
        .collect()
}
