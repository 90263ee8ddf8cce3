//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use layoutvec::chunking::{chunk, ChunkMode, ChunkingConfig, PatchGrid};
use layoutvec::encode::SyntheticEncoder;
use layoutvec::eval::{gen_concentrated_corpus, ndcg_at_k, CorpusConfig};
use layoutvec::fusion::{
    build_fused, build_s2m, build_s2m_global_inclusion, build_s2m_type_cluster, LocalVector,
};
use layoutvec::layout::{
    split_page, split_pages, BoundingBox, CategoryMap, ContentType, DetectionRecord,
    LayoutParseConfig, LayoutParser,
};
use layoutvec::pipeline::{encode_documents, run_queries};
use layoutvec::scoring::{maxsim, rank, single_vector_score};
use layoutvec::store::StorageStats;
use layoutvec::{
    EmbeddingVector, Error, FusionConfig, LayoutRegion, PageGeometry, Provenance, Qrels,
    QueryEmbedding, RelevanceScore, RetrievalIndex, RunFile, Scorer, Variant,
};
use layoutvec_cli::format_stats;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(), String>;
type Criterion = (&'static str, Duration, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let held: bool = $cond;
        if !held {
            return Err(format!($($msg)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> EmbeddingVector {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        if let Ok(u) = EmbeddingVector::normalized(v) {
            return u;
        }
    }
}

fn random_vectors(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<EmbeddingVector> {
    (0..n).map(|_| random_unit(rng, dim)).collect()
}

fn locals_of(vectors: &[EmbeddingVector], types: &[ContentType]) -> Vec<LocalVector> {
    vectors
        .iter()
        .enumerate()
        .map(|(i, v)| LocalVector {
            region_index: i,
            bbox: None,
            content_type: types.get(i).copied(),
            vector: v.clone(),
        })
        .collect()
}

fn f64_dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| f64::from(*x) * f64::from(*y))
        .sum()
}

/// Sum over query vectors of the best dot product, two plain loops.
fn oracle_maxsim(q: &[EmbeddingVector], d: &[EmbeddingVector]) -> f64 {
    let mut total = 0.0;
    for qi in q {
        let mut best = f64::NEG_INFINITY;
        for dj in d {
            let s = f64_dot(qi.as_slice(), dj.as_slice());
            if s > best {
                best = s;
            }
        }
        total += best;
    }
    total
}

fn oracle_normalized_mean(rows: &[&[f32]]) -> Vec<f64> {
    let dim = rows[0].len();
    let mut acc = vec![0.0f64; dim];
    for r in rows {
        for (a, x) in acc.iter_mut().zip(r.iter()) {
            *a += f64::from(*x);
        }
    }
    let n = acc.iter().map(|a| a * a).sum::<f64>().sqrt();
    acc.iter().map(|a| a / n).collect()
}

fn max_abs_diff(a: &[f32], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (f64::from(*x) - y).abs())
        .fold(0.0, f64::max)
}

fn c1_storage() -> Check {
    // 59 vectors over 10 pages
    let ks = [6, 6, 6, 6, 6, 6, 6, 6, 6, 5];
    let stats = StorageStats::from_counts(&ks, 128, 768).map_err(|e| e.to_string())?;
    let expected = 1.0 - (59.0 / 10.0) / 768.0;
    ensure!(
        (stats.avg_vectors_per_doc - 5.90).abs() < 1e-12,
        "avg k {}",
        stats.avg_vectors_per_doc
    );
    ensure!(
        (stats.reduction_vs_grid - expected).abs() < 1e-12,
        "reduction {}",
        stats.reduction_vs_grid
    );
    ensure!(
        (stats.reduction_vs_grid * 1e4).round() / 1e4 == 0.9923,
        "reduction {} does not round to 0.9923",
        stats.reduction_vs_grid
    );
    ensure!(stats.reduction_vs_grid > 0.95, "reduction not above 95%");
    ensure!(stats.reduction_vs_grid > 0.99, "reduction not above 99%");
    ensure!(
        format_stats(&stats).contains("reduction 99.23%"),
        "stats output: {}",
        format_stats(&stats)
    );
    Ok(())
}

fn c2_maxsim_oracle() -> Check {
    let mut r = rng(2);
    for case in 0..10_000 {
        let dim = r.random_range(1..=64);
        let k = r.random_range(1..=20);
        let nq = r.random_range(1..=8);
        // dim 1 vectors normalize to +-1
        let q = random_vectors(&mut r, nq, dim);
        let d = random_vectors(&mut r, k, dim);
        let record = build_s2m("d", &locals_of(&d, &[])).map_err(|e| e.to_string())?;
        let query = QueryEmbedding::new(q.clone()).map_err(|e| e.to_string())?;
        let got = maxsim(&query, &record).map_err(|e| e.to_string())?.value;
        let want = oracle_maxsim(&q, &d);
        ensure!((got - want).abs() <= 1e-6, "case {case}: {got} vs {want}");
    }
    Ok(())
}

fn c3_fusion_identities() -> Check {
    let mut r = rng(3);
    for case in 0..1000 {
        let dim = r.random_range(2..=64);
        let k = r.random_range(1..=20);
        let nq = r.random_range(1..=8);
        let locals = locals_of(&random_vectors(&mut r, k, dim), &[]);
        let global = random_unit(&mut r, dim);
        let query = QueryEmbedding::new(random_vectors(&mut r, nq, dim)).unwrap();

        let fused0 = build_fused("d", &locals, &global, 0.0).map_err(|e| e.to_string())?;
        let s2m = build_s2m("d", &locals).map_err(|e| e.to_string())?;
        let a = maxsim(&query, &fused0).unwrap().value;
        let b = maxsim(&query, &s2m).unwrap().value;
        ensure!(a == b, "case {case}: alpha=0 gives {a}, s2m {b}");

        let fused1 = build_fused("d", &locals, &global, 1.0).map_err(|e| e.to_string())?;
        let a = maxsim(&query, &fused1).unwrap().value;
        let b = single_vector_score(&query, &global).unwrap();
        ensure!(a == b, "case {case}: alpha=1 gives {a}, single {b}");
    }
    Ok(())
}

fn c4_superset() -> Check {
    let mut r = rng(4);
    let mut violations = 0;
    for _ in 0..1000 {
        let dim = r.random_range(2..=64);
        let k = r.random_range(1..=20);
        let nq = r.random_range(1..=8);
        let locals = locals_of(&random_vectors(&mut r, k, dim), &[]);
        let global = random_unit(&mut r, dim);
        let query = QueryEmbedding::new(random_vectors(&mut r, nq, dim)).unwrap();
        let base = build_s2m("d", &locals).unwrap();
        let sup = build_s2m_global_inclusion("d", &locals, &global).unwrap();
        if maxsim(&query, &sup).unwrap().value < maxsim(&query, &base).unwrap().value {
            violations += 1;
        }
    }
    ensure!(violations == 0, "{violations} violations");
    Ok(())
}

/// Independent reading-order reference: clamp, greedy bands on running mean
/// center-y, then center-x within a band, then filter and cap.
struct LayoutOracle {
    keys: Vec<(usize, f64)>,
    boxes: Vec<BoundingBox>,
}

impl LayoutOracle {
    fn new(page: &PageGeometry, dets: &[DetectionRecord], eps: f64) -> Self {
        let (w, h) = (f64::from(page.width), f64::from(page.height));
        let boxes: Vec<BoundingBox> = dets
            .iter()
            .map(|d| {
                BoundingBox::new(
                    d.bbox.x1.clamp(0.0, w),
                    d.bbox.y1.clamp(0.0, h),
                    d.bbox.x2.clamp(0.0, w),
                    d.bbox.y2.clamp(0.0, h),
                )
            })
            .collect();
        let cy = |b: &BoundingBox| (b.y1 + b.y2) / 2.0;
        let cx = |b: &BoundingBox| (b.x1 + b.x2) / 2.0;
        let mut order: Vec<usize> = (0..boxes.len()).collect();
        order.sort_by(|&a, &b| cy(&boxes[a]).partial_cmp(&cy(&boxes[b])).unwrap());
        let mut band_of = vec![0usize; boxes.len()];
        let mut band = 0usize;
        let mut members: Vec<f64> = Vec::new();
        for &i in &order {
            let y = cy(&boxes[i]);
            if !members.is_empty() {
                let mean = members.iter().sum::<f64>() / members.len() as f64;
                if (y - mean).abs() > eps * h {
                    band += 1;
                    members.clear();
                }
            }
            members.push(y);
            band_of[i] = band;
        }
        let keys = boxes
            .iter()
            .enumerate()
            .map(|(i, b)| (band_of[i], cx(b)))
            .collect();
        Self { keys, boxes }
    }

    fn key_of(&self, b: &BoundingBox) -> Option<(usize, f64)> {
        self.boxes.iter().position(|x| x == b).map(|i| self.keys[i])
    }
}

fn random_detections(r: &mut ChaCha8Rng, page: &PageGeometry) -> Vec<DetectionRecord> {
    let (w, h) = (f64::from(page.width), f64::from(page.height));
    let mode = r.random_range(0..5);
    let n = match mode {
        0 => 0,
        3 => r.random_range(21..60),
        _ => r.random_range(1..25),
    };
    (0..n)
        .map(|_| {
            // mode 1 draws only tiny boxes; some boxes overhang the page
            let (bw, bh) = if mode == 1 {
                (r.random_range(1.0..w * 0.05), r.random_range(1.0..h * 0.05))
            } else {
                (r.random_range(1.0..w * 0.6), r.random_range(1.0..h * 0.3))
            };
            let x1 = r.random_range(-0.05 * w..w - 1.0);
            let y1 = r.random_range(-0.05 * h..h - 1.0);
            let x1 = x1.max(-0.04 * w);
            let y1 = y1.max(-0.04 * h);
            DetectionRecord {
                bbox: BoundingBox::new(
                    x1,
                    y1,
                    x1 + bw.max(2.0 - x1.min(0.0)),
                    y1 + bh.max(2.0 - y1.min(0.0)),
                ),
                category_id: r.random_range(-1..11),
                score: r.random_range(0.0..=1.0),
            }
        })
        .collect()
}

fn c5_layout_fuzz() -> Check {
    let mut r = rng(5);
    let cfg = LayoutParseConfig::default();
    for case in 0..1000 {
        let page = PageGeometry::new(
            format!("p{case}"),
            r.random_range(50..3000),
            r.random_range(50..3000),
        )
        .unwrap();
        let dets = random_detections(&mut r, &page);
        let regions = split_page(&page, &dets, &cfg).map_err(|e| format!("case {case}: {e}"))?;
        ensure!(
            regions.len() <= 20,
            "case {case}: {} regions",
            regions.len()
        );
        ensure!(!regions.is_empty(), "case {case}: no regions");
        let oracle = LayoutOracle::new(&page, &dets, cfg.band_epsilon);
        let area = f64::from(page.width) * f64::from(page.height);
        let passing = oracle
            .boxes
            .iter()
            .filter(|b| (b.x2 - b.x1) * (b.y2 - b.y1) / area >= 0.01)
            .count();

        if dets.is_empty() {
            ensure!(
                regions.len() == 9,
                "case {case}: grid fallback gave {}",
                regions.len()
            );
            let covered: f64 = regions.iter().map(|x| x.bbox.area()).sum();
            ensure!(
                (covered - area).abs() < 1e-6,
                "case {case}: grid does not tile the page"
            );
            continue;
        }
        if passing == 0 {
            ensure!(
                regions.len() == 1
                    && regions[0].bbox
                        == BoundingBox::new(
                            0.0,
                            0.0,
                            f64::from(page.width),
                            f64::from(page.height)
                        ),
                "case {case}: expected whole-page fallback"
            );
            continue;
        }
        ensure!(
            regions.len() == passing.min(20),
            "case {case}: kept {} of {passing} passing regions",
            regions.len()
        );
        let mut keys = Vec::with_capacity(regions.len());
        for (i, reg) in regions.iter().enumerate() {
            ensure!(reg.index == i, "case {case}: index {} at {i}", reg.index);
            ensure!(
                reg.area_ratio >= 0.01,
                "case {case}: area ratio {}",
                reg.area_ratio
            );
            let key = oracle
                .key_of(&reg.bbox)
                .ok_or_else(|| format!("case {case}: region {i} is not a clamped detection"))?;
            keys.push(key);
        }
        for i in 0..keys.len() {
            for j in (i + 1)..keys.len() {
                let (bi, xi) = keys[i];
                let (bj, xj) = keys[j];
                ensure!(
                    bi < bj || (bi == bj && xi <= xj),
                    "case {case}: regions {i} and {j} out of reading order"
                );
            }
        }
    }
    Ok(())
}

fn reference_ndcg(ranked: &[String], grades: &BTreeMap<String, u32>, k: usize) -> Option<f64> {
    let g = |grade: u32| f64::from((1u32 << grade) - 1);
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, d)| g(grades.get(d).copied().unwrap_or(0)) / ((i + 2) as f64).log2())
        .sum();
    let mut ideal: Vec<u32> = grades.values().copied().collect();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &grade)| g(grade) / ((i + 2) as f64).log2())
        .sum();
    (idcg > 0.0).then_some(dcg / idcg)
}

fn scores_for(docs: &[String]) -> Vec<RelevanceScore> {
    docs.iter()
        .enumerate()
        .map(|(i, d)| RelevanceScore {
            doc_id: d.clone(),
            value: 1.0 - i as f64 * 0.01,
        })
        .collect()
}

fn c6_ndcg() -> Check {
    let names: Vec<String> = ["a", "b", "c", "d", "e"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut run = RunFile::new("t");
    run.insert_ranking("q", &scores_for(&names)).unwrap();
    let qrels = Qrels::parse("q 0 b 1\nq 0 d 1\n").unwrap();
    let got = ndcg_at_k(&run, &qrels, 5).unwrap().mean;
    ensure!((got - 0.6510).abs() < 1e-4, "worked example gave {got}");

    let mut r = rng(6);
    for case in 0..500 {
        let nq = r.random_range(1..6);
        let ndocs = r.random_range(3..30);
        let k = r.random_range(1..=10);
        let mut run = RunFile::new("t");
        let mut qrels = Qrels::new();
        let mut expected = BTreeMap::new();
        let mut judged: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
        for q in 0..nq {
            let qid = format!("q{q}");
            let mut pool: Vec<String> = (0..ndocs).map(|d| format!("d{d}")).collect();
            pool.shuffle(&mut r);
            let depth = r.random_range(0..=ndocs);
            let ranked: Vec<String> = pool[..depth].to_vec();
            if !ranked.is_empty() {
                run.insert_ranking(&qid, &scores_for(&ranked)).unwrap();
            }
            let mut grades = BTreeMap::new();
            for d in 0..ndocs {
                if r.random_bool(0.4) {
                    let g = r.random_range(0..4);
                    grades.insert(format!("d{d}"), g);
                    qrels.insert(&qid, &format!("d{d}"), g).unwrap();
                }
            }
            if let Some(v) = reference_ndcg(&ranked, &grades, k) {
                expected.insert(qid.clone(), v);
            }
            judged.insert(qid, grades);
        }
        let report = ndcg_at_k(&run, &qrels, k).map_err(|e| e.to_string())?;
        ensure!(
            report.per_query.len() == expected.len(),
            "case {case}: evaluated {} queries, reference {}",
            report.per_query.len(),
            expected.len()
        );
        for (q, v) in &expected {
            let got = report.per_query.get(q).copied().unwrap_or(f64::NAN);
            ensure!((got - v).abs() <= 1e-6, "case {case} {q}: {got} vs {v}");
        }
        if !expected.is_empty() {
            let mean = expected.values().sum::<f64>() / expected.len() as f64;
            ensure!(
                (report.mean - mean).abs() <= 1e-6,
                "case {case}: mean {} vs {mean}",
                report.mean
            );
        }
        let skipped = judged
            .iter()
            .filter(|(q, _)| !expected.contains_key(*q) && qrels.judgments(q).count() > 0)
            .count();
        ensure!(
            report.skipped.len() == skipped,
            "case {case}: skipped {}",
            report.skipped.len()
        );
    }

    // moving a relevant doc up never lowers nDCG
    for case in 0..500 {
        let ndocs = r.random_range(2..15);
        let k = r.random_range(1..=10);
        let mut ranked: Vec<String> = (0..ndocs).map(|d| format!("d{d}")).collect();
        ranked.shuffle(&mut r);
        let mut qrels = Qrels::new();
        let target = r.random_range(0..ndocs);
        let target_grade = r.random_range(1..4);
        for (i, d) in ranked.iter().enumerate() {
            let g = if i == target {
                target_grade
            } else {
                r.random_range(0..4)
            };
            qrels.insert("q", d, g).unwrap();
        }
        let score = |order: &[String]| {
            let mut run = RunFile::new("t");
            run.insert_ranking("q", &scores_for(order)).unwrap();
            ndcg_at_k(&run, &qrels, k).unwrap().per_query["q"]
        };
        let before = score(&ranked);
        let to = r.random_range(0..=target);
        let mut moved = ranked.clone();
        let doc = moved.remove(target);
        moved.insert(to, doc);
        let after = score(&moved);
        // the move also shifts the docs it jumps over down by one, so compare
        // only when they are no more relevant than the moved doc
        let jumped_ok = ranked[to..target]
            .iter()
            .all(|d| qrels.grade("q", d) <= target_grade);
        if jumped_ok {
            ensure!(after >= before - 1e-12, "case {case}: {before} -> {after}");
        }
        ensure!(
            (0.0..=1.0).contains(&after),
            "case {case}: out of range {after}"
        );
    }
    Ok(())
}

fn c7_round_trip() -> Check {
    let mut r = rng(7);
    let dim = 48;
    let records: Vec<_> = (0..60)
        .map(|d| {
            let k = r.random_range(1..=12);
            let locals = locals_of(&random_vectors(&mut r, k, dim), &[ContentType::Text]);
            let global = random_unit(&mut r, dim);
            build_fused(&format!("doc{d:03}"), &locals, &global, 0.7).unwrap()
        })
        .collect();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("index");
    let index =
        RetrievalIndex::from_records(&records, Default::default()).map_err(|e| e.to_string())?;
    index.save(&path).map_err(|e| e.to_string())?;
    let loaded = RetrievalIndex::load(&path).map_err(|e| e.to_string())?;
    let back = loaded.records();
    ensure!(back.len() == records.len(), "doc count changed");
    for (a, b) in records.iter().zip(&back) {
        ensure!(
            a.doc_id == b.doc_id && a.provenance() == b.provenance(),
            "{} metadata differs",
            a.doc_id
        );
        for (x, y) in a.vectors().iter().zip(b.vectors()) {
            let bits =
                |v: &EmbeddingVector| v.as_slice().iter().map(|f| f.to_bits()).collect::<Vec<_>>();
            ensure!(bits(x) == bits(y), "{} vectors differ", a.doc_id);
        }
    }
    for i in 0..20 {
        let nq = r.random_range(1..=8);
        let q = QueryEmbedding::new(random_vectors(&mut r, nq, dim)).unwrap();
        let a = rank(&q, &index, 10, Scorer::MaxSim).unwrap();
        let b = rank(&q, &loaded, 10, Scorer::MaxSim).unwrap();
        ensure!(a == b, "query {i} ranks differ");
    }
    let blob = path.join(layoutvec::store::VECTORS_FILE);
    let bytes = std::fs::read(&blob).map_err(|e| e.to_string())?;
    std::fs::write(&blob, &bytes[..bytes.len() - 1]).map_err(|e| e.to_string())?;
    match RetrievalIndex::load(&path) {
        Err(Error::CorruptIndex(_)) => Ok(()),
        other => Err(format!("truncated blob loaded as {other:?}")),
    }
}

fn c8_concentration() -> Check {
    let cfg = CorpusConfig::new(100, 5, 5000, 2024);
    let corpus = gen_concentrated_corpus(&cfg).map_err(|e| e.to_string())?;
    let encoder =
        SyntheticEncoder::with_corpus(cfg.seed, 256, &corpus.pages).map_err(|e| e.to_string())?;
    let parser = LayoutParser::new(
        LayoutParseConfig::default(),
        CategoryMap::doclayout_default(),
    );
    let crops = split_pages(&parser, &corpus.detections).map_err(|e| e.to_string())?;
    let evaluate = |variant: Variant, alpha: f64| -> Result<(f64, String), String> {
        let fusion = FusionConfig { alpha, variant };
        let records = encode_documents(&crops, &encoder, &fusion, "").map_err(|e| e.to_string())?;
        let index = RetrievalIndex::from_records(&records, Default::default())
            .map_err(|e| e.to_string())?;
        let run = run_queries(&index, &corpus.queries, &encoder, 10, Scorer::MaxSim, "t")
            .map_err(|e| e.to_string())?;
        let mean = ndcg_at_k(&run, &corpus.qrels, 5)
            .map_err(|e| e.to_string())?
            .mean;
        Ok((mean, run.to_text()))
    };
    let (single, _) = evaluate(Variant::Single, 0.0)?;
    let (fused, fused_run) = evaluate(Variant::Fused, 0.3)?;
    let (s2m, _) = evaluate(Variant::S2m, 0.0)?;
    println!("    nDCG@5 single {single:.4}, fused(0.3) {fused:.4}, s2m {s2m:.4}");
    ensure!(
        fused > single,
        "fused {fused} does not beat single {single}"
    );
    ensure!(s2m > single, "s2m {s2m} does not beat single {single}");
    let (again, again_run) = evaluate(Variant::Fused, 0.3)?;
    ensure!(again == fused && again_run == fused_run, "rerun differs");
    Ok(())
}

fn c9_variants() -> Check {
    let mut r = rng(9);
    // s2m_type_cluster
    for case in 0..300 {
        let dim = r.random_range(2..=32);
        let k = r.random_range(1..=20);
        let vectors = random_vectors(&mut r, k, dim);
        let types: Vec<ContentType> = (0..k)
            .map(|_| ContentType::ALL[r.random_range(0..5)])
            .collect();
        let record =
            build_s2m_type_cluster("d", &locals_of(&vectors, &types)).map_err(|e| e.to_string())?;
        let mut unique: Vec<ContentType> = Vec::new();
        for t in &types {
            if !unique.contains(t) {
                unique.push(*t);
            }
        }
        ensure!(
            record.k() == unique.len(),
            "case {case}: {} vectors for {} types",
            record.k(),
            unique.len()
        );
        for (t, (v, p)) in unique
            .iter()
            .zip(record.vectors().iter().zip(record.provenance()))
        {
            ensure!(
                *p == Provenance::ContentType { content_type: *t },
                "case {case}: provenance {p:?}"
            );
            let members: Vec<&[f32]> = vectors
                .iter()
                .zip(&types)
                .filter(|(_, x)| *x == t)
                .map(|(v, _)| v.as_slice())
                .collect();
            let want = oracle_normalized_mean(&members);
            if want.iter().all(|x| x.is_finite()) {
                ensure!(
                    max_abs_diff(v.as_slice(), &want) <= 1e-6,
                    "case {case}: {t} mean differs"
                );
            }
        }
    }

    // chunking mean modes against brute-force assignment and means
    for case in 0..300 {
        let dim = r.random_range(2..=16);
        let (rows, cols) = (r.random_range(1..=8u32), r.random_range(1..=8u32));
        let page = PageGeometry::new(
            format!("p{case}"),
            r.random_range(50..1000),
            r.random_range(50..1000),
        )
        .unwrap();
        let patches = random_vectors(&mut r, (rows * cols) as usize, dim);
        let grid =
            PatchGrid::new(page.clone(), rows, cols, patches.clone()).map_err(|e| e.to_string())?;
        let (w, h) = (f64::from(page.width), f64::from(page.height));
        let regions: Vec<LayoutRegion> = (0..r.random_range(0..6))
            .map(|i| {
                let x1 = r.random_range(0.0..w * 0.8);
                let y1 = r.random_range(0.0..h * 0.8);
                let bbox = BoundingBox::new(
                    x1,
                    y1,
                    r.random_range(x1 + 1.0..=w),
                    r.random_range(y1 + 1.0..=h),
                );
                LayoutRegion {
                    index: i,
                    bbox,
                    content_type: ContentType::ALL[r.random_range(0..3)],
                    area_ratio: bbox.area() / (w * h),
                }
            })
            .collect();
        // patch centers from integer floor edges
        let owner: Vec<Option<usize>> = (0..(rows * cols) as usize)
            .map(|p| {
                let (pr, pc) = (p as u32 / cols, p as u32 % cols);
                let e = |i: u32, n: u32, ext: u32| {
                    (u64::from(i) * u64::from(ext) / u64::from(n)) as f64
                };
                let cx = (e(pc, cols, page.width) + e(pc + 1, cols, page.width)) / 2.0;
                let cy = (e(pr, rows, page.height) + e(pr + 1, rows, page.height)) / 2.0;
                let mut best: Option<usize> = None;
                for (i, reg) in regions.iter().enumerate() {
                    let b = reg.bbox;
                    if cx >= b.x1 && cx <= b.x2 && cy >= b.y1 && cy <= b.y2 {
                        best = match best {
                            Some(j) if regions[j].bbox.area() <= b.area() => Some(j),
                            _ => Some(i),
                        };
                    }
                }
                best
            })
            .collect();
        for mode in [ChunkMode::SubimgMean, ChunkMode::TypeMean] {
            let cfg = ChunkingConfig {
                mode,
                ..Default::default()
            };
            let out = chunk(&grid, &page, &regions, &cfg).map_err(|e| e.to_string())?;
            let mut groups: Vec<Vec<&[f32]>> = Vec::new();
            if owner.iter().all(Option::is_none) {
                groups.push(patches.iter().map(|v| v.as_slice()).collect());
                ensure!(out.whole_page_fallback, "case {case}: fallback not flagged");
            } else if mode == ChunkMode::SubimgMean {
                for i in 0..regions.len() {
                    let g: Vec<&[f32]> = owner
                        .iter()
                        .zip(&patches)
                        .filter(|(o, _)| **o == Some(i))
                        .map(|(_, v)| v.as_slice())
                        .collect();
                    if !g.is_empty() {
                        groups.push(g);
                    }
                }
            } else {
                let mut seen: Vec<ContentType> = Vec::new();
                for reg in &regions {
                    if seen.contains(&reg.content_type) {
                        continue;
                    }
                    seen.push(reg.content_type);
                    let g: Vec<&[f32]> = owner
                        .iter()
                        .zip(&patches)
                        .filter(|(o, _)| {
                            o.is_some_and(|i| regions[i].content_type == reg.content_type)
                        })
                        .map(|(_, v)| v.as_slice())
                        .collect();
                    if !g.is_empty() {
                        groups.push(g);
                    }
                }
            }
            ensure!(
                out.record.k() == groups.len(),
                "case {case} {mode:?}: {} vectors for {} groups",
                out.record.k(),
                groups.len()
            );
            for (v, g) in out.record.vectors().iter().zip(&groups) {
                let want = oracle_normalized_mean(g);
                if want.iter().all(|x| x.is_finite()) {
                    ensure!(
                        max_abs_diff(v.as_slice(), &want) <= 1e-6,
                        "case {case} {mode:?}: mean differs"
                    );
                }
            }
        }
        let semantic = ChunkingConfig {
            mode: ChunkMode::Semantic,
            ..Default::default()
        };
        let out = chunk(&grid, &page, &regions, &semantic).map_err(|e| e.to_string())?;
        let expected = 10.min((rows * cols) as usize);
        ensure!(
            out.record.k() == expected,
            "case {case}: semantic emitted {}",
            out.record.k()
        );
    }
    Ok(())
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_layoutvec"))
        .args(args)
        .status()
        .map_err(|e| e.to_string())?;
    ensure!(
        status.success(),
        "layoutvec {} exited with {status}",
        args.join(" ")
    );
    Ok(())
}

fn c10_parallel_determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).display().to_string();
    let corpus_dir = p("corpus");
    run_cli(&[
        "gen-corpus",
        "--docs",
        "500",
        "--regions",
        "5",
        "--seed",
        "10",
        "--out-dir",
        &corpus_dir,
    ])?;
    let c = |name: &str| Path::new(&corpus_dir).join(name).display().to_string();
    run_cli(&[
        "split",
        "--layout",
        &c("layout.jsonl"),
        "--out",
        &p("crops.jsonl"),
    ])?;
    run_cli(&[
        "index",
        "--crops",
        &p("crops.jsonl"),
        "--encoder",
        "mock:10",
        "--corpus",
        &c("corpus.jsonl"),
        "--variant",
        "fused",
        "--alpha",
        "0.7",
        "--out",
        &p("index"),
    ])?;
    let mut outputs = Vec::new();
    for threads in ["1", "4", "8"] {
        let out = p(&format!("run{threads}.txt"));
        run_cli(&[
            "query",
            "--index",
            &p("index"),
            "--queries",
            &c("queries.jsonl"),
            "--top-k",
            "100",
            "--threads",
            threads,
            "--out",
            &out,
        ])?;
        outputs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    ensure!(!outputs[0].is_empty(), "empty run file");
    ensure!(
        outputs[0] == outputs[1] && outputs[0] == outputs[2],
        "run files differ across thread counts"
    );
    let run =
        RunFile::parse(std::str::from_utf8(&outputs[0]).unwrap()).map_err(|e| e.to_string())?;
    ensure!(run.len() == 500, "run covers {} queries", run.len());
    Ok(())
}

fn main() {
    let criteria: [Criterion; 10] = [
        (
            "1 storage reduction arithmetic",
            Duration::from_secs(1),
            c1_storage,
        ),
        (
            "2 maxsim oracle equivalence",
            Duration::from_secs(30),
            c2_maxsim_oracle,
        ),
        (
            "3 fusion identities",
            Duration::from_secs(10),
            c3_fusion_identities,
        ),
        (
            "4 superset monotonicity",
            Duration::from_secs(10),
            c4_superset,
        ),
        (
            "5 layout split invariants",
            Duration::from_secs(10),
            c5_layout_fuzz,
        ),
        ("6 ndcg correctness", Duration::from_secs(10), c6_ndcg),
        ("7 index round trip", Duration::from_secs(5), c7_round_trip),
        (
            "8 semantic concentration",
            Duration::from_secs(60),
            c8_concentration,
        ),
        (
            "9 variant construction",
            Duration::from_secs(10),
            c9_variants,
        ),
        (
            "10 determinism under parallelism",
            Duration::from_secs(120),
            c10_parallel_determinism,
        ),
    ];
    let mut failed = 0;
    for (name, limit, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let result = result.and_then(|()| {
            if elapsed <= limit {
                Ok(())
            } else {
                Err(format!("took {elapsed:.2?}, limit {limit:?}"))
            }
        });
        match result {
            Ok(()) => println!("criterion {name}: PASS ({elapsed:.2?})"),
            Err(msg) => {
                failed += 1;
                println!("criterion {name}: FAIL ({elapsed:.2?}): {msg}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
