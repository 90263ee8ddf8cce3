//! Glue between the stages: crops to records, queries to run files.

use rayon::prelude::*;

use crate::encode::{encode_batch, encode_vectors, EncodeRequest, Encoder};
use crate::error::{Error, Result};
use crate::eval::{QueryRecord, RunFile};
use crate::fusion::{build_record, FusionConfig, LocalVector, MultiVectorRecord, Variant};
use crate::layout::CropSpec;
use crate::scoring::{rank, Scorer};
use crate::store::RetrievalIndex;

/// Crops grouped by page in first-appearance order.
pub fn group_crops(crops: &[CropSpec]) -> Vec<(String, Vec<CropSpec>)> {
    let mut out: Vec<(String, Vec<CropSpec>)> = Vec::new();
    let mut pos = std::collections::HashMap::new();
    for c in crops {
        let i = *pos.entry(c.page_id.clone()).or_insert_with(|| {
            out.push((c.page_id.clone(), Vec::new()));
            out.len() - 1
        });
        out[i].1.push(c.clone());
    }
    out
}

/// Encodes every page and its crops and builds one record per page.
///
/// `image_prefix` is prepended to each page id to form the adapter's image
/// reference.
pub fn encode_documents(
    crops: &[CropSpec],
    encoder: &dyn Encoder,
    cfg: &FusionConfig,
    image_prefix: &str,
) -> Result<Vec<MultiVectorRecord>> {
    cfg.validate()?;
    let pages = group_crops(crops);
    let image = |page: &str| format!("{image_prefix}{page}");
    let page_reqs: Vec<EncodeRequest> = pages
        .iter()
        .map(|(p, _)| EncodeRequest::page(image(p)))
        .collect();
    let globals = encode_vectors(&page_reqs, encoder)?;
    let mut records = Vec::with_capacity(pages.len());
    for ((page_id, crops), global) in pages.iter().zip(&globals) {
        let locals = if cfg.variant == Variant::Single {
            Vec::new()
        } else {
            let reqs: Vec<EncodeRequest> = crops
                .iter()
                .map(|c| EncodeRequest::region(image(page_id), c.region_index, c.bbox))
                .collect();
            encode_vectors(&reqs, encoder)?
                .into_iter()
                .zip(crops)
                .map(|(vector, c)| LocalVector {
                    region_index: c.region_index,
                    bbox: Some(c.bbox),
                    content_type: Some(c.content_type),
                    vector,
                })
                .collect()
        };
        records.push(build_record(page_id, &locals, global, cfg)?);
    }
    Ok(records)
}

/// Encodes and ranks every query; the run is tagged with `tag`.
pub fn run_queries(
    index: &RetrievalIndex,
    queries: &[QueryRecord],
    encoder: &dyn Encoder,
    top_k: usize,
    scorer: Scorer,
    tag: &str,
) -> Result<RunFile> {
    let reqs: Vec<EncodeRequest> = queries
        .iter()
        .map(|q| EncodeRequest::query(q.effective_text()).with_query_id(q.query_id.clone()))
        .collect();
    let encoded = encode_batch(&reqs, encoder)?;
    let rankings: Vec<_> = queries
        .par_iter()
        .zip(encoded)
        .map(|(q, e)| {
            let emb = e.into_query().ok_or_else(|| {
                Error::AdapterFailure(format!("no query embedding for {}", q.query_id))
            })?;
            rank(&emb, index, top_k, scorer).map(|r| (q.query_id.as_str(), r))
        })
        .collect::<Result<_>>()?;
    let mut run = RunFile::new(tag);
    for (qid, ranking) in rankings {
        run.insert_ranking(qid, &ranking)?;
    }
    Ok(run)
}
