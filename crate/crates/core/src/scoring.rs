//! Late-interaction scoring.
//!
//! `maxsim(Q, D) = sum_i max_j q_i . d_j`. Dot products accumulate in `f64`
//! over `f32` storage. The same kernel serves MaxSim, the single-vector
//! baseline and attribution, so their scores agree bit-for-bit.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encode::{EmbeddingVector, QueryEmbedding};
use crate::error::{Error, Result};
use crate::fusion::{MultiVectorRecord, Provenance};
use crate::store::RetrievalIndex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceScore {
    pub doc_id: String,
    pub value: f64,
}

/// Best-matching document vector for one query vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenMatch {
    pub index: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxSimScore {
    pub value: f64,
    /// One entry per query vector.
    pub matches: Vec<TokenMatch>,
}

#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks_a = a.chunks_exact(4);
    let chunks_b = b.chunks_exact(4);
    let tail: f64 = chunks_a
        .remainder()
        .iter()
        .zip(chunks_b.remainder())
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        for lane in 0..4 {
            acc[lane] += f64::from(ca[lane]) * f64::from(cb[lane]);
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Argmax of `q . row` over `rows`; ties go to the lowest index.
#[inline]
pub(crate) fn best_match<'a>(q: &[f32], rows: impl Iterator<Item = &'a [f32]>) -> TokenMatch {
    let mut best = TokenMatch {
        index: 0,
        similarity: f64::NEG_INFINITY,
    };
    for (j, row) in rows.enumerate() {
        let s = dot(q, row);
        if s > best.similarity {
            best = TokenMatch {
                index: j,
                similarity: s,
            };
        }
    }
    best
}

fn check_query_dim(query: &QueryEmbedding, dim: usize) -> Result<()> {
    if query.dim() != dim {
        return Err(Error::DimMismatch {
            expected: dim,
            actual: query.dim(),
        });
    }
    Ok(())
}

pub(crate) fn maxsim_rows<'a, I>(query: &QueryEmbedding, rows: I) -> MaxSimScore
where
    I: Iterator<Item = &'a [f32]> + Clone,
{
    let matches: Vec<TokenMatch> = query
        .vectors()
        .iter()
        .map(|q| best_match(q.as_slice(), rows.clone()))
        .collect();
    let value = matches.iter().map(|m| m.similarity).sum();
    MaxSimScore { value, matches }
}

fn maxsim_value<'a, I>(query: &QueryEmbedding, rows: I) -> f64
where
    I: Iterator<Item = &'a [f32]> + Clone,
{
    query
        .vectors()
        .iter()
        .map(|q| best_match(q.as_slice(), rows.clone()).similarity)
        .sum()
}

/// MaxSim score with per-query-vector winners.
pub fn maxsim(query: &QueryEmbedding, doc: &MultiVectorRecord) -> Result<MaxSimScore> {
    check_query_dim(query, doc.dim())?;
    Ok(maxsim_rows(query, doc.rows()))
}

/// Summed similarity of every query vector to one page vector.
pub fn single_vector_score(query: &QueryEmbedding, doc_global: &EmbeddingVector) -> Result<f64> {
    check_query_dim(query, doc_global.dim())?;
    Ok(query
        .vectors()
        .iter()
        .map(|q| dot(q.as_slice(), doc_global.as_slice()))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineMode {
    Add,
    Multiply,
}

fn s2m_rows<'a>(
    query: &QueryEmbedding,
    locals: impl Iterator<Item = &'a [f32]>,
    global: &[f32],
    mode: CombineMode,
) -> f64 {
    locals
        .map(|v| {
            let a: f64 = query.vectors().iter().map(|q| dot(q.as_slice(), v)).sum();
            let g = dot(global, v);
            match mode {
                CombineMode::Add => a + g,
                CombineMode::Multiply => a * g,
            }
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Scores each region by combining its query similarity with its similarity
/// to the page vector, then takes the best region.
pub fn s2m_scoring(
    query: &QueryEmbedding,
    locals: &[EmbeddingVector],
    global: &EmbeddingVector,
    mode: CombineMode,
) -> Result<f64> {
    if locals.is_empty() {
        return Err(Error::InvalidRequest(
            "s2m scoring needs at least one region".into(),
        ));
    }
    let dim = global.dim();
    check_query_dim(query, dim)?;
    if let Some(v) = locals.iter().find(|v| v.dim() != dim) {
        return Err(Error::DimMismatch {
            expected: dim,
            actual: v.dim(),
        });
    }
    Ok(s2m_rows(
        query,
        locals.iter().map(EmbeddingVector::as_slice),
        global.as_slice(),
        mode,
    ))
}

/// How [`rank`] scores a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Scorer {
    #[default]
    MaxSim,
    /// Page vector only; needs a `global` provenance entry.
    SingleVector,
    /// Region/page combination scores; needs a `global` provenance entry.
    S2m(CombineMode),
}

impl fmt::Display for Scorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scorer::MaxSim => "maxsim",
            Scorer::SingleVector => "single",
            Scorer::S2m(CombineMode::Add) => "s2m_add",
            Scorer::S2m(CombineMode::Multiply) => "s2m_multiply",
        })
    }
}

impl FromStr for Scorer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "maxsim" => Ok(Scorer::MaxSim),
            "single" | "single_vector" => Ok(Scorer::SingleVector),
            "s2m_add" | "add" => Ok(Scorer::S2m(CombineMode::Add)),
            "s2m_multiply" | "s2m_mul" | "multiply" => Ok(Scorer::S2m(CombineMode::Multiply)),
            other => Err(Error::InvalidConfig(format!("unknown scorer {other:?}"))),
        }
    }
}

fn global_row(index: &RetrievalIndex, doc: usize) -> Result<&[f32]> {
    index
        .provenance(doc)
        .iter()
        .position(Provenance::is_global)
        .map(|j| index.row(doc, j))
        .ok_or_else(|| Error::MissingGlobal {
            doc_id: index.doc_id(doc).to_string(),
        })
}

/// Scores one indexed document.
pub fn score_document(
    query: &QueryEmbedding,
    index: &RetrievalIndex,
    doc: usize,
    scorer: Scorer,
) -> Result<f64> {
    check_query_dim(query, index.dim())?;
    match scorer {
        Scorer::MaxSim => Ok(maxsim_value(query, index.rows(doc))),
        Scorer::SingleVector => {
            let g = global_row(index, doc)?;
            Ok(query.vectors().iter().map(|q| dot(q.as_slice(), g)).sum())
        }
        Scorer::S2m(mode) => {
            let g = global_row(index, doc)?;
            let prov = index.provenance(doc);
            let locals = index
                .rows(doc)
                .zip(prov)
                .filter(|(_, p)| !p.is_global())
                .map(|(r, _)| r);
            let value = s2m_rows(query, locals, g, mode);
            if value == f64::NEG_INFINITY {
                return Err(Error::InvalidRequest(format!(
                    "document {} has no region vectors",
                    index.doc_id(doc)
                )));
            }
            Ok(value)
        }
    }
}

/// Descending by score, ties by ascending doc id.
pub fn compare_scores(a: &RelevanceScore, b: &RelevanceScore) -> Ordering {
    b.value
        .total_cmp(&a.value)
        .then_with(|| a.doc_id.cmp(&b.doc_id))
}

/// Top `top_k` documents for `query`. Documents are scored in parallel on the
/// current rayon pool; the result does not depend on the pool size.
pub fn rank(
    query: &QueryEmbedding,
    index: &RetrievalIndex,
    top_k: usize,
    scorer: Scorer,
) -> Result<Vec<RelevanceScore>> {
    if top_k == 0 {
        return Err(Error::InvalidConfig("top_k must be at least 1".into()));
    }
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    check_query_dim(query, index.dim())?;
    let mut scored: Vec<RelevanceScore> = (0..index.len())
        .into_par_iter()
        .map(|doc| {
            score_document(query, index, doc, scorer).map(|value| RelevanceScore {
                doc_id: index.doc_id(doc).to_string(),
                value,
            })
        })
        .collect::<Result<_>>()?;
    scored.sort_by(compare_scores);
    scored.truncate(top_k);
    Ok(scored)
}
