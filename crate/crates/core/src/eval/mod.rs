//! Relevance judgments, run files, nDCG and per-token attribution.
//!
//! nDCG uses gain `2^rel - 1` and discount `1 / log2(rank + 1)`; the ideal
//! DCG is computed from all judged documents of the query, truncated at `k`.

mod corpus;

pub use corpus::{gen_concentrated_corpus, ConcentratedCorpus, CorpusConfig, DEFAULT_CORPUS_DIM};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encode::QueryEmbedding;
use crate::error::{Error, Result};
use crate::fusion::{MultiVectorRecord, Provenance};
use crate::scoring::{maxsim, RelevanceScore};

/// Relevance grades keyed by query id, then doc id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    grades: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a judgment. Judging the same pair twice is an error.
    pub fn insert(&mut self, query_id: &str, doc_id: &str, grade: u32) -> Result<()> {
        let docs = self.grades.entry(query_id.to_string()).or_default();
        if docs.insert(doc_id.to_string(), grade).is_some() {
            return Err(Error::MalformedQrels(format!(
                "duplicate judgment for {query_id} {doc_id}"
            )));
        }
        Ok(())
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> u32 {
        self.grades
            .get(query_id)
            .and_then(|d| d.get(doc_id))
            .copied()
            .unwrap_or(0)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.grades.keys().map(String::as_str)
    }

    pub fn judgments(&self, query_id: &str) -> impl Iterator<Item = (&str, u32)> {
        self.grades
            .get(query_id)
            .into_iter()
            .flat_map(|d| d.iter().map(|(k, &g)| (k.as_str(), g)))
    }

    pub fn len(&self) -> usize {
        self.grades.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.grades.is_empty()
    }

    /// Parses `query_id 0 doc_id grade` lines. Blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut qrels = Self::new();
        for (lineno, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::MalformedQrels(format!("line {}: {msg}", lineno + 1));
            if fields.len() != 4 {
                return Err(bad("expected 4 fields"));
            }
            let grade: i64 = fields[3]
                .parse()
                .map_err(|_| bad("grade is not an integer"))?;
            let grade = u32::try_from(grade).map_err(|_| bad("grade must be non-negative"))?;
            qrels
                .insert(fields[0], fields[2], grade)
                .map_err(|_| bad("duplicate judgment"))?;
        }
        Ok(qrels)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (q, docs) in &self.grades {
            for (d, g) in docs {
                let _ = writeln!(out, "{q} 0 {d} {g}");
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
}

/// Ranked results per query. Ranks are dense from 1 and scores never increase
/// with rank.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunFile {
    pub tag: String,
    queries: BTreeMap<String, Vec<RunEntry>>,
}

impl RunFile {
    pub fn new(tag: impl Into<String>) -> Self {
        Self {
            tag: tag.into(),
            queries: BTreeMap::new(),
        }
    }

    /// Records a ranking; ranks are assigned from the list order.
    pub fn insert_ranking(&mut self, query_id: &str, ranking: &[RelevanceScore]) -> Result<()> {
        let entries = ranking
            .iter()
            .enumerate()
            .map(|(i, s)| RunEntry {
                doc_id: s.doc_id.clone(),
                rank: i + 1,
                score: s.value,
            })
            .collect();
        self.insert(query_id, entries)
    }

    /// Records entries for a query after checking rank and score order.
    pub fn insert(&mut self, query_id: &str, mut entries: Vec<RunEntry>) -> Result<()> {
        entries.sort_by_key(|e| e.rank);
        for (i, e) in entries.iter().enumerate() {
            if e.rank != i + 1 {
                return Err(Error::MalformedRun(format!(
                    "query {query_id}: ranks are not dense from 1 (found rank {} at position {})",
                    e.rank,
                    i + 1
                )));
            }
            if !e.score.is_finite() {
                return Err(Error::MalformedRun(format!(
                    "query {query_id}: non-finite score at rank {}",
                    e.rank
                )));
            }
        }
        if let Some(w) = entries.windows(2).find(|w| w[1].score > w[0].score) {
            return Err(Error::MalformedRun(format!(
                "query {query_id}: score increases at rank {}",
                w[1].rank
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = entries.iter().find(|e| !seen.insert(e.doc_id.as_str())) {
            return Err(Error::MalformedRun(format!(
                "query {query_id}: doc {} ranked twice",
                dup.doc_id
            )));
        }
        if self.queries.insert(query_id.to_string(), entries).is_some() {
            return Err(Error::MalformedRun(format!(
                "query {query_id} appears twice"
            )));
        }
        Ok(())
    }

    pub fn ranking(&self, query_id: &str) -> Option<&[RunEntry]> {
        self.queries.get(query_id).map(Vec::as_slice)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.queries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// Parses `query_id Q0 doc_id rank score tag` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut grouped: BTreeMap<String, Vec<RunEntry>> = BTreeMap::new();
        let mut tag = None;
        for (lineno, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::MalformedRun(format!("line {}: {msg}", lineno + 1));
            if fields.len() != 6 {
                return Err(bad("expected 6 fields"));
            }
            let rank: usize = fields[3]
                .parse()
                .map_err(|_| bad("rank is not a positive integer"))?;
            let score: f64 = fields[4]
                .parse()
                .map_err(|_| bad("score is not a number"))?;
            tag.get_or_insert_with(|| fields[5].to_string());
            grouped
                .entry(fields[0].to_string())
                .or_default()
                .push(RunEntry {
                    doc_id: fields[2].to_string(),
                    rank,
                    score,
                });
        }
        let mut run = Self::new(tag.unwrap_or_default());
        for (q, entries) in grouped {
            run.insert(&q, entries)?;
        }
        Ok(run)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Serializes in query-id order. Scores use the shortest exact decimal
    /// form, so the output is byte-stable.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (q, entries) in &self.queries {
            for e in entries {
                let _ = writeln!(
                    out,
                    "{q} Q0 {} {} {} {}",
                    e.doc_id, e.rank, e.score, self.tag
                );
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Output of [`ndcg_at_k`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NdcgReport {
    pub k: usize,
    /// Evaluated queries in id order.
    pub per_query: BTreeMap<String, f64>,
    /// Mean over `per_query`; zero when nothing was evaluated.
    pub mean: f64,
    /// Judged queries whose ideal DCG is zero.
    pub skipped: Vec<String>,
}

fn gain(grade: u32) -> f64 {
    2f64.powi(grade as i32) - 1.0
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// nDCG@k for every judged query. A judged query missing from the run scores
/// zero; run queries without judgments are ignored.
pub fn ndcg_at_k(run: &RunFile, qrels: &Qrels, k: usize) -> Result<NdcgReport> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let mut per_query = BTreeMap::new();
    let mut skipped = Vec::new();
    for q in qrels.query_ids() {
        let mut ideal: Vec<u32> = qrels.judgments(q).map(|(_, g)| g).collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let idcg: f64 = ideal
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, &g)| gain(g) * discount(i + 1))
            .sum();
        if idcg == 0.0 {
            skipped.push(q.to_string());
            continue;
        }
        let dcg: f64 = run
            .ranking(q)
            .unwrap_or_default()
            .iter()
            .filter(|e| e.rank <= k)
            .map(|e| gain(qrels.grade(q, &e.doc_id)) * discount(e.rank))
            .sum();
        per_query.insert(q.to_string(), dcg / idcg);
    }
    let mean = if per_query.is_empty() {
        0.0
    } else {
        per_query.values().sum::<f64>() / per_query.len() as f64
    };
    Ok(NdcgReport {
        k,
        per_query,
        mean,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenAttribution {
    pub query_vector: usize,
    pub vector_index: usize,
    pub provenance: Provenance,
    pub similarity: f64,
}

/// Which document vector won each query vector's max.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub doc_id: String,
    pub score: f64,
    pub tokens: Vec<TokenAttribution>,
}

/// Attributes a MaxSim score to document vectors, using the same kernel and
/// tie-break as scoring.
pub fn attribute(query: &QueryEmbedding, doc: &MultiVectorRecord) -> Result<AttributionReport> {
    let score = maxsim(query, doc)?;
    let tokens = score
        .matches
        .iter()
        .enumerate()
        .map(|(i, m)| TokenAttribution {
            query_vector: i,
            vector_index: m.index,
            provenance: doc.provenance()[m.index].clone(),
            similarity: m.similarity,
        })
        .collect();
    Ok(AttributionReport {
        doc_id: doc.doc_id.clone(),
        score: score.value,
        tokens,
    })
}

/// One line of a queries file. `tokens`, when present, is joined with spaces
/// and used instead of `text`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    #[serde(default)]
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
}

impl QueryRecord {
    pub fn effective_text(&self) -> String {
        match &self.tokens {
            Some(t) => t.join(" "),
            None => self.text.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::EmbeddingVector;

    fn run_of(q: &str, docs: &[&str]) -> RunFile {
        let mut run = RunFile::new("t");
        let ranking: Vec<RelevanceScore> = docs
            .iter()
            .enumerate()
            .map(|(i, d)| RelevanceScore {
                doc_id: d.to_string(),
                value: 10.0 - i as f64,
            })
            .collect();
        run.insert_ranking(q, &ranking).unwrap();
        run
    }

    #[test]
    fn perfect_single_relevant() {
        let qrels = Qrels::parse("q 0 a 1\n").unwrap();
        let r = ndcg_at_k(&run_of("q", &["a", "b"]), &qrels, 5).unwrap();
        assert_eq!(r.per_query["q"], 1.0);
    }

    #[test]
    fn ranks_two_and_four() {
        let qrels = Qrels::parse("q 0 b 1\nq 0 d 1\n").unwrap();
        let r = ndcg_at_k(&run_of("q", &["a", "b", "c", "d", "e"]), &qrels, 5).unwrap();
        let dcg = 1.0 / 3f64.log2() + 1.0 / 5f64.log2();
        let idcg = 1.0 + 1.0 / 3f64.log2();
        assert!((r.mean - dcg / idcg).abs() < 1e-12);
        assert!((r.mean - 0.6510).abs() < 1e-4);
    }

    #[test]
    fn missed_and_skipped() {
        let qrels = Qrels::parse("q 0 z 2\nempty 0 a 0\n").unwrap();
        let r = ndcg_at_k(&run_of("q", &["a", "b"]), &qrels, 5).unwrap();
        assert_eq!(r.per_query["q"], 0.0);
        assert_eq!(r.skipped, vec!["empty".to_string()]);
        assert!(ndcg_at_k(&RunFile::new("t"), &qrels, 0).is_err());
    }

    #[test]
    fn run_text_round_trip() {
        let run = run_of("q1", &["a", "b", "c"]);
        let text = run.to_text();
        assert_eq!(text.lines().next().unwrap(), "q1 Q0 a 1 10 t");
        assert_eq!(RunFile::parse(&text).unwrap(), run);
    }

    #[test]
    fn malformed_runs() {
        for bad in [
            "q Q0 a 1 1.0 t\nq Q0 b 3 0.5 t\n",
            "q Q0 a 2 1.0 t\n",
            "q Q0 a 1 1.0 t\nq Q0 b 2 2.0 t\n",
            "q Q0 a 1 1.0\n",
            "q Q0 a x 1.0 t\n",
        ] {
            assert!(
                matches!(RunFile::parse(bad), Err(Error::MalformedRun(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn malformed_qrels() {
        for bad in ["q 0 a -1\n", "q 0 a\n", "q 0 a 1\nq 0 a 2\n"] {
            assert!(
                matches!(Qrels::parse(bad), Err(Error::MalformedQrels(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn attribution_orthogonal() {
        let e = |v: [f32; 3]| EmbeddingVector::new(v.to_vec()).unwrap();
        let doc = MultiVectorRecord::new(
            "d",
            vec![e([1.0, 0.0, 0.0]), e([0.0, 1.0, 0.0]), e([0.0, 0.0, 1.0])],
            vec![
                Provenance::Global,
                Provenance::Region {
                    region_index: 0,
                    bbox: None,
                    content_type: None,
                },
                Provenance::Region {
                    region_index: 1,
                    bbox: None,
                    content_type: None,
                },
            ],
        )
        .unwrap();
        let q = QueryEmbedding::single(e([0.0, 0.0, 1.0]));
        let report = attribute(&q, &doc).unwrap();
        assert_eq!(report.tokens[0].vector_index, 2);
        assert_eq!(report.tokens[0].similarity, 1.0);
    }

    #[test]
    fn query_record_tokens() {
        let q: QueryRecord =
            serde_json::from_str(r#"{"query_id":"q","tokens":["a","b"]}"#).unwrap();
        assert_eq!(q.effective_text(), "a b");
    }
}
