//! Command implementations for the `layoutvec` binary.
//!
//! Each `cmd_*` function does the work of one subcommand and returns its
//! result; [`run`] parses arguments, writes outputs and maps errors to exit
//! codes (2 usage, 3 data, 4 adapter).

use std::fmt::{self, Write as _};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use layoutvec::chunking::{chunk, read_patch_grids, ChunkMode, ChunkingConfig};
use layoutvec::encode::{FileEncoder, RemoteEncoder, SyntheticEncoder};
use layoutvec::eval::{
    attribute, gen_concentrated_corpus, ndcg_at_k, AttributionReport, CorpusConfig, NdcgReport,
    QueryRecord,
};
use layoutvec::layout::{CategoryMap, DetectorPage, LayoutParseConfig, LayoutParser};
use layoutvec::pipeline::{encode_documents, group_crops, run_queries};
use layoutvec::store::{storage_stats, IndexMeta, MANIFEST_FILE};
use layoutvec::{
    jsonl, CropSpec, Encoder, Error, ErrorClass, FusionConfig, IndexManifest, LayoutRegion, Qrels,
    RetrievalIndex, RunFile, Scorer, StorageStats, Variant,
};
use serde::Serialize;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_ADAPTER: i32 = 4;

pub const DEFAULT_DIM: usize = 256;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) => match e.class() {
                ErrorClass::Data => EXIT_DATA,
                ErrorClass::Adapter => EXIT_ADAPTER,
            },
        }
    }

    /// One-line JSON written to stderr on failure.
    pub fn to_json(&self) -> String {
        let kind = match self.exit_code() {
            EXIT_USAGE => "usage",
            EXIT_ADAPTER => "adapter",
            _ => "data",
        };
        serde_json::json!({
            "error": kind,
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        })
        .to_string()
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Where embeddings come from: `mock:SEED`, `file:PATH` or `http:URL`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EncoderSpec {
    Mock(u64),
    File(PathBuf),
    Http(String),
}

impl FromStr for EncoderSpec {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let (scheme, rest) = s
            .split_once(':')
            .ok_or_else(|| CliError::Usage(format!("encoder spec {s:?} has no scheme")))?;
        match scheme {
            "mock" => rest
                .parse()
                .map(EncoderSpec::Mock)
                .map_err(|_| CliError::Usage(format!("mock seed {rest:?} is not an integer"))),
            "file" if !rest.is_empty() => Ok(EncoderSpec::File(PathBuf::from(rest))),
            "http" | "https" => Ok(EncoderSpec::Http(s.to_string())),
            _ => Err(CliError::Usage(format!("unsupported encoder spec {s:?}"))),
        }
    }
}

impl fmt::Display for EncoderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncoderSpec::Mock(seed) => write!(f, "mock:{seed}"),
            EncoderSpec::File(p) => write!(f, "file:{}", p.display()),
            EncoderSpec::Http(url) => write!(f, "{url}"),
        }
    }
}

impl EncoderSpec {
    /// `corpus` feeds the mock encoder's region and page bags. File encoders
    /// read `{"id","vector"}` lines, or a `.bin` blob with a `.ids.json`
    /// sidecar next to it.
    pub fn build(&self, corpus: Option<&Path>, dim: usize) -> CliResult<Box<dyn Encoder>> {
        Ok(match self {
            EncoderSpec::Mock(seed) => Box::new(match corpus {
                Some(path) => SyntheticEncoder::from_corpus_file(*seed, dim, path)?,
                None => SyntheticEncoder::new(*seed, dim)?,
            }),
            EncoderSpec::File(path) => {
                if path.extension().is_some_and(|e| e == "bin") {
                    Box::new(FileEncoder::from_blob(
                        path,
                        &path.with_extension("ids.json"),
                    )?)
                } else {
                    Box::new(FileEncoder::from_jsonl(path)?)
                }
            }
            EncoderSpec::Http(url) => Box::new(RemoteEncoder::new(url, dim)),
        })
    }
}

/// Encoder flags shared by every command that embeds.
#[derive(Debug, Clone, Args)]
pub struct EncoderArgs {
    /// Embedding source: mock:SEED, file:PATH or http(s)://HOST
    #[arg(long)]
    pub encoder: Option<String>,
    /// Synthetic corpus (JSONL pages) backing a mock encoder
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Embedding dimension for mock and http encoders
    #[arg(long)]
    pub dim: Option<usize>,
}

impl EncoderArgs {
    fn spec(&self) -> CliResult<EncoderSpec> {
        self.encoder
            .as_deref()
            .ok_or_else(|| CliError::Usage("--encoder is required".into()))?
            .parse()
    }

    fn build(&self) -> CliResult<(EncoderSpec, Box<dyn Encoder>)> {
        let spec = self.spec()?;
        let enc = spec.build(self.corpus.as_deref(), self.dim.unwrap_or(DEFAULT_DIM))?;
        Ok((spec, enc))
    }
}

#[derive(Debug, Clone, Args)]
pub struct LayoutArgs {
    /// Minimum region area as a fraction of the page
    #[arg(long, default_value_t = 0.01)]
    pub tau: f64,
    /// Maximum regions kept per page
    #[arg(long, default_value_t = 20)]
    pub max_regions: usize,
    /// Fallback grid rows when a page has no detections
    #[arg(long, default_value_t = 3)]
    pub grid_rows: u32,
    /// Fallback grid columns when a page has no detections
    #[arg(long, default_value_t = 3)]
    pub grid_cols: u32,
    /// Reading-order band width as a fraction of page height
    #[arg(long, default_value_t = 0.02)]
    pub band_epsilon: f64,
    /// JSON object mapping detector category ids to content types
    #[arg(long)]
    pub categories: Option<PathBuf>,
}

impl LayoutArgs {
    fn config(&self) -> LayoutParseConfig {
        LayoutParseConfig {
            tau: self.tau,
            n_max: self.max_regions,
            grid_rows: self.grid_rows,
            grid_cols: self.grid_cols,
            band_epsilon: self.band_epsilon,
        }
    }

    fn categories(&self) -> CliResult<CategoryMap> {
        match &self.categories {
            None => Ok(CategoryMap::doclayout_default()),
            Some(path) => {
                let text = read_text(path)?;
                serde_json::from_str(&text).map_err(|e| {
                    CliError::Core(Error::Parse {
                        location: path.display().to_string(),
                        message: e.to_string(),
                    })
                })
            }
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FusionArgs {
    /// Representation: fused, s2m, s2m_type_cluster, s2m_global_inclusion, single
    #[arg(long, default_value = "fused")]
    pub variant: String,
    /// Global weight for the fused variant
    #[arg(long, default_value_t = 0.7)]
    pub alpha: f64,
}

impl FusionArgs {
    fn config(&self) -> CliResult<FusionConfig> {
        let variant: Variant = self.variant.parse().map_err(usage)?;
        let cfg = FusionConfig {
            alpha: self.alpha,
            variant,
        };
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }
}

fn usage(e: Error) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "layoutvec",
    version,
    about = "Layout-aware multi-vector page retrieval"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn detector output into reading-ordered crops (JSONL)
    Split {
        /// Detector output, one page per line
        #[arg(long)]
        layout: PathBuf,
        /// Crop file to write
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        layout_args: LayoutArgs,
    },
    /// Encode crops and pages and write an index directory
    Index {
        /// Crop file from `split`
        #[arg(long)]
        crops: PathBuf,
        #[command(flatten)]
        encoder: EncoderArgs,
        #[command(flatten)]
        fusion: FusionArgs,
        /// Prefix joined to page ids to form image references
        #[arg(long, default_value = "")]
        image_prefix: String,
        /// Index directory to create
        #[arg(long)]
        out: PathBuf,
        /// Replace an existing index at --out
        #[arg(long)]
        force: bool,
    },
    /// Rank the index for every query and write a run file
    Query {
        /// Index directory
        #[arg(long)]
        index: PathBuf,
        /// Queries, one {"query_id","text"} object per line
        #[arg(long)]
        queries: PathBuf,
        /// Encoder flags; --encoder defaults to the one recorded in the index
        #[command(flatten)]
        encoder: EncoderArgs,
        /// Documents kept per query
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        /// maxsim, single, s2m_add or s2m_multiply
        #[arg(long, default_value = "maxsim")]
        scorer: String,
        /// Worker threads; 0 uses every core
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Run tag written in the last column
        #[arg(long, default_value = "layoutvec")]
        tag: String,
        /// Run file to write; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a run file against relevance judgments
    Eval {
        /// Run file (`query_id Q0 doc_id rank score tag`)
        #[arg(long)]
        run: PathBuf,
        /// Relevance judgments (`query_id 0 doc_id grade`)
        #[arg(long)]
        qrels: PathBuf,
        /// Cutoff for nDCG
        #[arg(long, default_value_t = 5)]
        eval_k: usize,
        /// Print the full report as JSON
        #[arg(long)]
        json: bool,
    },
    /// Report vector counts, bytes and reduction against a patch grid
    Stats {
        /// Index directory
        #[arg(long)]
        index: PathBuf,
        /// Vectors per page of the patch-level baseline
        #[arg(long, default_value_t = 768)]
        grid_baseline: usize,
        /// Print JSON instead of text
        #[arg(long)]
        json: bool,
    },
    /// Show which stored vector won each query vector for one document
    Attribute {
        /// Index directory
        #[arg(long)]
        index: PathBuf,
        /// Query text
        #[arg(long)]
        query: String,
        /// Query id handed to keyed encoders
        #[arg(long)]
        query_id: Option<String>,
        /// Document to attribute
        #[arg(long)]
        doc_id: String,
        #[command(flatten)]
        encoder: EncoderArgs,
    },
    /// Rebuild the fused index for each alpha and report mean nDCG
    SweepAlpha {
        /// Crop file from `split`
        #[arg(long)]
        crops: PathBuf,
        #[command(flatten)]
        encoder: EncoderArgs,
        /// Queries, one {"query_id","text"} object per line
        #[arg(long)]
        queries: PathBuf,
        /// Relevance judgments (`query_id 0 doc_id grade`)
        #[arg(long)]
        qrels: PathBuf,
        /// Comma-separated alphas; defaults to 0.1 through 0.9
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
        /// Cutoff for nDCG
        #[arg(long, default_value_t = 5)]
        eval_k: usize,
        /// Documents kept per query
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        /// Prefix joined to page ids to form image references
        #[arg(long, default_value = "")]
        image_prefix: String,
    },
    /// Write a synthetic corpus with one answering region per query
    GenCorpus {
        /// Number of pages
        #[arg(long, default_value_t = 100)]
        docs: usize,
        /// Regions per page
        #[arg(long, default_value_t = 5)]
        regions: usize,
        /// Vocabulary size shared by all pages
        #[arg(long, default_value_t = 5000)]
        vocab: usize,
        /// Generator and mock encoder seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for corpus.jsonl, layout.jsonl, queries.jsonl and qrels.txt
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Build a patch-pooling index from patch grids and crops
    Chunk {
        /// Patch grid manifest, one {"page_id","rows","cols","width","height"} per line
        #[arg(long)]
        patches: PathBuf,
        /// Vector blob holding every grid's patches in manifest order
        #[arg(long)]
        patch_vectors: PathBuf,
        /// Crop file from `split`
        #[arg(long)]
        crops: PathBuf,
        /// type_mean, type_cluster, subimg_mean, subimg_cluster or semantic
        #[arg(long, default_value = "subimg_mean")]
        mode: String,
        /// Clusters kept by the semantic mode
        #[arg(long, default_value_t = 10)]
        semantic_k: usize,
        /// Similarity at which cluster modes stop merging
        #[arg(long, default_value_t = 0.9)]
        merge_threshold: f64,
        /// Index directory to create
        #[arg(long)]
        out: PathBuf,
        /// Replace an existing index at --out
        #[arg(long)]
        force: bool,
    },
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| {
        CliError::Core(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| {
        CliError::Core(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

fn clear_existing(path: &Path, force: bool) -> CliResult<()> {
    if !path.exists() {
        return Ok(());
    }
    if !force {
        return Err(Error::IndexExists(path.to_path_buf()).into());
    }
    if !path.join(MANIFEST_FILE).is_file() {
        return Err(CliError::Usage(format!(
            "refusing to replace {}: not an index directory",
            path.display()
        )));
    }
    fs::remove_dir_all(path).map_err(|e| {
        CliError::Core(Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    })
}

/// Number of crops written and pages seen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SplitSummary {
    pub pages: usize,
    pub crops: usize,
}

pub fn cmd_split(
    layout: &Path,
    out: &Path,
    cfg: &LayoutParseConfig,
    categories: CategoryMap,
) -> CliResult<SplitSummary> {
    cfg.validate().map_err(usage)?;
    let pages: Vec<DetectorPage> = jsonl::read(layout)?;
    let crops =
        layoutvec::layout::split_pages(&LayoutParser::new(cfg.clone(), categories), &pages)?;
    jsonl::write(out, &crops)?;
    Ok(SplitSummary {
        pages: pages.len(),
        crops: crops.len(),
    })
}

pub fn cmd_index(
    crops: &Path,
    spec: &EncoderSpec,
    encoder: &dyn Encoder,
    cfg: &FusionConfig,
    image_prefix: &str,
    out: &Path,
    force: bool,
) -> CliResult<IndexManifest> {
    let crops: Vec<CropSpec> = jsonl::read(crops)?;
    let records = encode_documents(&crops, encoder, cfg, image_prefix)?;
    let meta = IndexMeta {
        variant: cfg.variant.as_str().to_string(),
        alpha: (cfg.variant == Variant::Fused).then_some(cfg.alpha),
        encoder: Some(spec.to_string()),
    };
    let index = RetrievalIndex::from_records(&records, meta)?;
    clear_existing(out, force)?;
    Ok(index.save(out)?)
}

/// Ranks every query on a pool of `threads` workers (0 = all cores).
pub fn cmd_query(
    index: &RetrievalIndex,
    queries: &[QueryRecord],
    encoder: &dyn Encoder,
    top_k: usize,
    scorer: Scorer,
    threads: usize,
    tag: &str,
) -> CliResult<RunFile> {
    if top_k == 0 {
        return Err(CliError::Usage("--top-k must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} threads: {e}")))?;
    Ok(pool.install(|| run_queries(index, queries, encoder, top_k, scorer, tag))?)
}

pub fn cmd_eval(run: &Path, qrels: &Path, k: usize) -> CliResult<NdcgReport> {
    if k == 0 {
        return Err(CliError::Usage("--eval-k must be at least 1".into()));
    }
    let run = RunFile::read(run)?;
    let qrels = Qrels::read(qrels)?;
    Ok(ndcg_at_k(&run, &qrels, k)?)
}

pub fn format_eval(report: &NdcgReport) -> String {
    let mut out = String::new();
    for (q, v) in &report.per_query {
        let _ = writeln!(out, "{q}\t{v:.4}");
    }
    let _ = writeln!(out, "mean ndcg@{} {:.4}", report.k, report.mean);
    let _ = writeln!(out, "evaluated {}", report.per_query.len());
    let _ = writeln!(out, "skipped {}", report.skipped.len());
    out
}

pub fn cmd_stats(index: &Path, grid_baseline: usize) -> CliResult<StorageStats> {
    if grid_baseline == 0 {
        return Err(CliError::Usage("--grid-baseline must be at least 1".into()));
    }
    let index = RetrievalIndex::load(index)?;
    Ok(storage_stats(&index, grid_baseline)?)
}

pub fn format_stats(stats: &StorageStats) -> String {
    format!(
        "docs {}\nvectors {}\navg vectors per doc {:.2}\nbytes {}\ngrid baseline {}\nreduction {:.2}%\n",
        stats.num_docs,
        stats.total_vectors,
        stats.avg_vectors_per_doc,
        stats.total_bytes,
        stats.grid_baseline,
        stats.reduction_vs_grid * 100.0
    )
}

pub fn cmd_attribute(
    index: &RetrievalIndex,
    encoder: &dyn Encoder,
    query: &str,
    query_id: Option<&str>,
    doc_id: &str,
) -> CliResult<AttributionReport> {
    let doc = index
        .find(doc_id)
        .ok_or_else(|| CliError::Usage(format!("doc {doc_id} is not in the index")))?;
    let q = layoutvec::encode::encode_query(query, query_id, encoder)?;
    Ok(attribute(&q, &index.record(doc))?)
}

pub fn default_alphas() -> Vec<f64> {
    (1..=9).map(|i| f64::from(i) / 10.0).collect()
}

/// Mean nDCG@k of the fused variant at each alpha.
#[allow(clippy::too_many_arguments)]
pub fn cmd_sweep_alpha(
    crops: &[CropSpec],
    encoder: &dyn Encoder,
    queries: &[QueryRecord],
    qrels: &Qrels,
    alphas: &[f64],
    top_k: usize,
    k: usize,
    image_prefix: &str,
) -> CliResult<Vec<(f64, f64)>> {
    if alphas.is_empty() {
        return Err(CliError::Usage("no alphas to sweep".into()));
    }
    alphas
        .iter()
        .map(|&alpha| {
            let cfg = FusionConfig {
                alpha,
                variant: Variant::Fused,
            };
            cfg.validate().map_err(usage)?;
            let records = encode_documents(crops, encoder, &cfg, image_prefix)?;
            let index = RetrievalIndex::from_records(&records, IndexMeta::default())?;
            let run = run_queries(&index, queries, encoder, top_k, Scorer::MaxSim, "sweep")?;
            Ok((alpha, ndcg_at_k(&run, qrels, k)?.mean))
        })
        .collect()
}

pub fn format_sweep(rows: &[(f64, f64)], k: usize) -> String {
    let mut out = format!("alpha\tndcg@{k}\n");
    for (a, v) in rows {
        let _ = writeln!(out, "{a:.2}\t{v:.4}");
    }
    out
}

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const LAYOUT_FILE: &str = "layout.jsonl";
pub const QUERIES_FILE: &str = "queries.jsonl";
pub const QRELS_FILE: &str = "qrels.txt";

pub fn cmd_gen_corpus(cfg: &CorpusConfig, out_dir: &Path) -> CliResult<()> {
    let corpus = gen_concentrated_corpus(cfg)?;
    fs::create_dir_all(out_dir).map_err(|e| {
        CliError::Core(Error::Io {
            path: out_dir.to_path_buf(),
            source: e,
        })
    })?;
    jsonl::write(&out_dir.join(CORPUS_FILE), &corpus.pages)?;
    jsonl::write(&out_dir.join(LAYOUT_FILE), &corpus.detections)?;
    jsonl::write(&out_dir.join(QUERIES_FILE), &corpus.queries)?;
    corpus.qrels.write(&out_dir.join(QRELS_FILE))?;
    Ok(())
}

/// Number of pages chunked and pages that fell back to a whole-page mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ChunkSummary {
    pub pages: usize,
    pub fallbacks: usize,
}

pub fn cmd_chunk(
    patches: &Path,
    patch_vectors: &Path,
    crops: &Path,
    cfg: &ChunkingConfig,
    out: &Path,
    force: bool,
) -> CliResult<ChunkSummary> {
    cfg.validate().map_err(usage)?;
    let grids = read_patch_grids(patches, patch_vectors)?;
    let crops: Vec<CropSpec> = jsonl::read(crops)?;
    let by_page: std::collections::HashMap<String, Vec<CropSpec>> =
        group_crops(&crops).into_iter().collect();
    let mut records = Vec::with_capacity(grids.len());
    let mut fallbacks = 0;
    for grid in &grids {
        let page = grid.page();
        let area = page.area();
        let regions: Vec<LayoutRegion> = by_page
            .get(&page.page_id)
            .map(|cs| {
                cs.iter()
                    .map(|c| LayoutRegion {
                        index: c.region_index,
                        bbox: c.bbox,
                        content_type: c.content_type,
                        area_ratio: c.bbox.area() / area,
                    })
                    .collect()
            })
            .unwrap_or_default();
        let output = chunk(grid, page, &regions, cfg)?;
        fallbacks += usize::from(output.whole_page_fallback);
        records.push(output.record);
    }
    let meta = IndexMeta {
        variant: format!("chunk_{}", cfg.mode.as_str()),
        alpha: None,
        encoder: None,
    };
    let index = RetrievalIndex::from_records(&records, meta)?;
    clear_existing(out, force)?;
    index.save(out)?;
    Ok(ChunkSummary {
        pages: grids.len(),
        fallbacks,
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

fn emit(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(path) => write_text(path, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| {
                    CliError::Core(Error::Io {
                        path: PathBuf::from("<stdout>"),
                        source: e,
                    })
                })
        }
    }
}

fn read_queries(path: &Path) -> CliResult<Vec<QueryRecord>> {
    Ok(jsonl::read(path)?)
}

/// Runs one parsed command, writing data to files or stdout.
pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Split {
            layout,
            out,
            layout_args,
        } => {
            let summary = cmd_split(
                &layout,
                &out,
                &layout_args.config(),
                layout_args.categories()?,
            )?;
            log::info!("split {} pages into {} crops", summary.pages, summary.crops);
            Ok(())
        }
        Command::Index {
            crops,
            encoder,
            fusion,
            image_prefix,
            out,
            force,
        } => {
            let cfg = fusion.config()?;
            let (spec, enc) = encoder.build()?;
            let manifest = cmd_index(
                &crops,
                &spec,
                enc.as_ref(),
                &cfg,
                &image_prefix,
                &out,
                force,
            )?;
            log::info!(
                "indexed {} docs into {}",
                manifest.docs.len(),
                out.display()
            );
            Ok(())
        }
        Command::Query {
            index,
            queries,
            encoder,
            top_k,
            scorer,
            threads,
            tag,
            out,
        } => {
            let scorer: Scorer = scorer.parse().map_err(usage)?;
            let index = RetrievalIndex::load(&index)?;
            let enc = query_encoder(&index, &encoder)?;
            let queries = read_queries(&queries)?;
            let run = cmd_query(&index, &queries, enc.as_ref(), top_k, scorer, threads, &tag)?;
            emit(&run.to_text(), out.as_deref())
        }
        Command::Eval {
            run,
            qrels,
            eval_k,
            json,
        } => {
            let report = cmd_eval(&run, &qrels, eval_k)?;
            if !report.skipped.is_empty() {
                log::warn!(
                    "{} queries have no relevant documents",
                    report.skipped.len()
                );
            }
            let text = if json {
                to_json(&report)
            } else {
                format_eval(&report)
            };
            emit(&text, None)
        }
        Command::Stats {
            index,
            grid_baseline,
            json,
        } => {
            let stats = cmd_stats(&index, grid_baseline)?;
            let text = if json {
                to_json(&stats)
            } else {
                format_stats(&stats)
            };
            emit(&text, None)
        }
        Command::Attribute {
            index,
            query,
            query_id,
            doc_id,
            encoder,
        } => {
            let index = RetrievalIndex::load(&index)?;
            let enc = query_encoder(&index, &encoder)?;
            let report = cmd_attribute(&index, enc.as_ref(), &query, query_id.as_deref(), &doc_id)?;
            emit(&to_json(&report), None)
        }
        Command::SweepAlpha {
            crops,
            encoder,
            queries,
            qrels,
            alphas,
            eval_k,
            top_k,
            image_prefix,
        } => {
            if eval_k == 0 || top_k == 0 {
                return Err(CliError::Usage(
                    "--eval-k and --top-k must be at least 1".into(),
                ));
            }
            let (_, enc) = encoder.build()?;
            let crops: Vec<CropSpec> = jsonl::read(&crops)?;
            let queries = read_queries(&queries)?;
            let qrels = Qrels::read(&qrels)?;
            let alphas = if alphas.is_empty() {
                default_alphas()
            } else {
                alphas
            };
            let rows = cmd_sweep_alpha(
                &crops,
                enc.as_ref(),
                &queries,
                &qrels,
                &alphas,
                top_k,
                eval_k,
                &image_prefix,
            )?;
            emit(&format_sweep(&rows, eval_k), None)
        }
        Command::GenCorpus {
            docs,
            regions,
            vocab,
            seed,
            out_dir,
        } => cmd_gen_corpus(&CorpusConfig::new(docs, regions, vocab, seed), &out_dir),
        Command::Chunk {
            patches,
            patch_vectors,
            crops,
            mode,
            semantic_k,
            merge_threshold,
            out,
            force,
        } => {
            let cfg = ChunkingConfig {
                mode: mode.parse::<ChunkMode>().map_err(usage)?,
                semantic_k,
                merge_threshold,
            };
            let summary = cmd_chunk(&patches, &patch_vectors, &crops, &cfg, &out, force)?;
            if summary.fallbacks > 0 {
                log::warn!(
                    "{} of {} pages fell back to a whole-page mean",
                    summary.fallbacks,
                    summary.pages
                );
            }
            Ok(())
        }
    }
}

/// Uses `--encoder` when given, else the encoder recorded in the index.
fn query_encoder(index: &RetrievalIndex, args: &EncoderArgs) -> CliResult<Box<dyn Encoder>> {
    let spec: EncoderSpec = match (&args.encoder, &index.meta().encoder) {
        (Some(s), _) | (None, Some(s)) => s.parse()?,
        (None, None) => {
            return Err(CliError::Usage(
                "index records no encoder; pass --encoder".into(),
            ))
        }
    };
    let enc = spec.build(args.corpus.as_deref(), args.dim.unwrap_or(index.dim()))?;
    if enc.dim() != index.dim() {
        return Err(Error::DimMismatch {
            expected: index.dim(),
            actual: enc.dim(),
        }
        .into());
    }
    Ok(enc)
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
