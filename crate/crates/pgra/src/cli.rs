//! Batch command-line surface. One thin subcommand per workflow step; all of
//! the behavior lives in the library modules.
//!
//! Exit codes: 0 on full success, 1 when individual items failed (queries,
//! sweep cells), 2 on configuration or i/o errors.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::corpus::{self, Corpus, Granularity};
use crate::encoder::{Bm25Index, Bm25Params, EncoderConfig, Pooling};
use crate::error::{Error, Result};
use crate::eval::{self, ConfusionMatrix, MetricsReport};
use crate::index::DenseIndex;
use crate::pipeline::{
    self, PipelineConfig, Query, QueryResult, RerankedEvidence, RetrieverKind, ScoredCandidate,
    SearchBackend, Stage1Params,
};
use crate::prompts::{Metric, TaskSpec};
use crate::reader::{self, Prediction};
use crate::util;

pub const ENDPOINT_ENV: &str = "PGRA_ENCODER_ENDPOINT";

#[derive(Parser)]
#[command(
    name = "pgra",
    version,
    about = "Two-stage evidence retrieval: dense recall plus prompt-guided reranking"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a corpus file into the normalized JSONL format
    Ingest(IngestArgs),
    /// Encode a corpus and persist a dense index
    BuildIndex(BuildIndexArgs),
    /// Stage-1 retrieval only: top-k candidates per query
    Retrieve(RetrieveArgs),
    /// Stage-2 reranking of previously retrieved candidates
    Rerank(RerankArgs),
    /// Full retrieve + rerank + vote run
    Pipeline(PipelineArgs),
    /// Pseudo-label every corpus record with the prototype classifier
    PseudoLabel(PseudoLabelArgs),
    /// Score predictions against gold labels
    Evaluate(EvaluateArgs),
    /// Label-consistency buckets and mean consistency score
    ConsistencyReport(ConsistencyArgs),
    /// Run the pipeline over a k/d grid and emit a CSV
    Sweep(SweepArgs),
    /// Export query + evidence packs for an external trained reader
    ExportReaderPack(ExportArgs),
}

#[derive(Args, Clone)]
struct EncoderArgs {
    /// Use the built-in deterministic reference encoder
    #[arg(long)]
    stub_encoder: bool,
    /// Remote encoder endpoint; PGRA_ENCODER_ENDPOINT is the fallback
    #[arg(long)]
    encoder_endpoint: Option<String>,
    /// Embedding dimension. For the reference encoder, sizes below ~1k start
    /// to alias distinct tokens on realistic vocabularies.
    #[arg(long, default_value_t = 1024)]
    dim: usize,
    /// L2-normalize remote vectors
    #[arg(long)]
    normalize: bool,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 10_000)]
    timeout_ms: u64,
    #[arg(long, value_enum, default_value_t = Pooling::Cls)]
    pooling: Pooling,
}

impl EncoderArgs {
    fn to_config(&self) -> Result<EncoderConfig> {
        let mut config = if self.stub_encoder {
            EncoderConfig::reference(self.dim)
        } else {
            let endpoint = self
                .encoder_endpoint
                .clone()
                .or_else(|| std::env::var(ENDPOINT_ENV).ok())
                .ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "no encoder configured: pass --stub-encoder, --encoder-endpoint, or set {ENDPOINT_ENV}"
                    ))
                })?;
            EncoderConfig::remote(endpoint, self.dim)
        };
        config.normalize = self.normalize;
        config.batch_size = self.batch_size;
        config.timeout_ms = self.timeout_ms;
        config.pooling = self.pooling;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args, Clone)]
struct Stage2Args {
    /// Stage-2 encoder endpoint (defaults to the stage-1 endpoint)
    #[arg(long)]
    stage2_endpoint: Option<String>,
    /// Stage-2 embedding dimension (defaults to --dim)
    #[arg(long)]
    stage2_dim: Option<usize>,
    #[arg(long, value_enum)]
    stage2_pooling: Option<Pooling>,
}

impl Stage2Args {
    fn to_config(&self, stage1: &EncoderConfig) -> Result<EncoderConfig> {
        let mut config = stage1.clone();
        if let Some(endpoint) = &self.stage2_endpoint {
            config.endpoint = Some(endpoint.clone());
            config.kind = crate::encoder::EncoderKind::Remote;
        }
        if let Some(dim) = self.stage2_dim {
            config.dim = dim;
        }
        // prompted mode reads the final-position state unless told otherwise
        config.pooling = self.stage2_pooling.unwrap_or(Pooling::LastToken);
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Stage-1 candidate depth
    #[arg(long, default_value_t = 150)]
    k: usize,
    /// Stage-2 selection depth
    #[arg(long, default_value_t = 16)]
    d: usize,
    /// Shot count for the few-shot prefix
    #[arg(long, default_value_t = 8)]
    m: usize,
    /// Run seed; all randomness flows from it
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = RetrieverKind::Dense)]
    retriever: RetrieverKind,
    /// Clusters probed on a clustered index (defaults to all)
    #[arg(long)]
    nprobe: Option<usize>,
    /// Sample the prefix class-balanced instead of uniformly
    #[arg(long)]
    balanced: bool,
    /// Worker threads (defaults to available parallelism)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct IngestArgs {
    /// Input file
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = IngestFormat::Jsonl)]
    format: IngestFormat,
    #[arg(long, value_enum, default_value_t = Granularity::Sentence)]
    granularity: Granularity,
    /// Normalized corpus JSONL to write
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum IngestFormat {
    Jsonl,
    Plaintext,
}

#[derive(Args)]
struct BuildIndexArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Index file to write
    #[arg(long)]
    out: PathBuf,
    /// Build a clustered index with this many clusters
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Granularity::Sentence)]
    granularity: Granularity,
    #[command(flatten)]
    encoder: EncoderArgs,
}

#[derive(Args)]
struct RetrieveArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Dense index file (required for --retriever dense)
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    queries: PathBuf,
    /// Results JSONL to write
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    encoder: EncoderArgs,
}

#[derive(Args)]
struct RerankArgs {
    /// Stage-1 results JSONL
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Task definition JSON
    #[arg(long)]
    task: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    encoder: EncoderArgs,
    #[command(flatten)]
    stage2: Stage2Args,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    task: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    /// Output directory for results.jsonl, predictions.jsonl, metrics.json
    #[arg(long)]
    out: PathBuf,
    /// Pseudo-label sidecar JSONL; missing labels fall back to prototypes
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Granularity::Sentence)]
    granularity: Granularity,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    encoder: EncoderArgs,
    #[command(flatten)]
    stage2: Stage2Args,
}

#[derive(Args)]
struct PseudoLabelArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    task: PathBuf,
    /// Sidecar JSONL to write
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    encoder: EncoderArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    predictions: PathBuf,
    /// Queries JSONL carrying gold labels
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    task: PathBuf,
    /// Metrics JSON to write
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConsistencyArgs {
    #[arg(long)]
    results: PathBuf,
    /// Pseudo-label sidecar JSONL
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long, default_value_t = 16)]
    d: usize,
    /// Report JSON to write
    #[arg(long)]
    out: PathBuf,
    /// Also write the report as CSV
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    task: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    /// Comma-separated stage-1 depths, e.g. 16,50,150
    #[arg(long, value_delimiter = ',')]
    ks: Vec<usize>,
    /// Comma-separated stage-2 depths, e.g. 4,8,16
    #[arg(long, value_delimiter = ',')]
    ds: Vec<usize>,
    /// CSV to write
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Granularity::Sentence)]
    granularity: Granularity,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    encoder: EncoderArgs,
    #[command(flatten)]
    stage2: Stage2Args,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    task: PathBuf,
    /// Reader-pack JSONL to write
    #[arg(long)]
    out: PathBuf,
}

/// Entry point for the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Parse and run from an explicit argument list; used by integration tests.
pub fn run_from<I, S>(args: I) -> Result<ExitCode>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    execute(cli.command)
}

fn execute(command: Command) -> Result<ExitCode> {
    match command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::BuildIndex(args) => cmd_build_index(args),
        Command::Retrieve(args) => cmd_retrieve(args),
        Command::Rerank(args) => cmd_rerank(args),
        Command::Pipeline(args) => cmd_pipeline(args),
        Command::PseudoLabel(args) => cmd_pseudo_label(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::ConsistencyReport(args) => cmd_consistency(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::ExportReaderPack(args) => cmd_export_reader_pack(args),
    }
}

fn load_corpus(path: &Path, granularity: Granularity) -> Result<Corpus> {
    let (corpus, stats) = corpus::ingest_jsonl(path, granularity)?;
    if stats.skipped_blank_lines + stats.skipped_blank_texts > 0 {
        eprintln!(
            "note: skipped {} blank lines and {} blank-text records in {}",
            stats.skipped_blank_lines,
            stats.skipped_blank_texts,
            path.display()
        );
    }
    Ok(corpus)
}

fn load_queries(path: &Path) -> Result<Vec<Query>> {
    util::read_jsonl(path)
}

fn threads_of(run: &RunArgs) -> usize {
    run.threads.unwrap_or_else(util::default_threads)
}

fn cmd_ingest(args: IngestArgs) -> Result<ExitCode> {
    let (corpus, stats) = match args.format {
        IngestFormat::Jsonl => corpus::ingest_jsonl(&args.input, args.granularity)?,
        IngestFormat::Plaintext => corpus::ingest_plaintext(&args.input)?,
    };
    corpus.write_jsonl(&args.out)?;
    println!(
        "ingested {} records ({} blank lines skipped, {} blank texts skipped) -> {}",
        corpus.len(),
        stats.skipped_blank_lines,
        stats.skipped_blank_texts,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_build_index(args: BuildIndexArgs) -> Result<ExitCode> {
    let corpus = load_corpus(&args.corpus, args.granularity)?;
    let encoder = args.encoder.to_config()?;
    let started = Instant::now();
    let index = match args.clusters {
        None => DenseIndex::build_flat(&corpus, &encoder)?,
        Some(n) => DenseIndex::build_clustered(&corpus, &encoder, n, args.seed)?,
    };
    index.save(&args.out)?;
    println!(
        "indexed {} vectors (dim {}) in {:.2}s -> {}",
        index.count(),
        index.dim(),
        started.elapsed().as_secs_f64(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

enum OwnedBackend {
    Dense(DenseIndex),
    Bm25(Bm25Index),
}

impl OwnedBackend {
    fn open(
        retriever: RetrieverKind,
        index_path: Option<&Path>,
        corpus: &Corpus,
    ) -> Result<OwnedBackend> {
        match retriever {
            RetrieverKind::Dense => {
                let path = index_path.ok_or_else(|| {
                    Error::InvalidConfig("--retriever dense requires --index".into())
                })?;
                Ok(OwnedBackend::Dense(DenseIndex::load(path)?))
            }
            RetrieverKind::Bm25 => Ok(OwnedBackend::Bm25(Bm25Index::build(
                corpus,
                Bm25Params::default(),
            )?)),
        }
    }

    fn as_backend(&self) -> SearchBackend<'_> {
        match self {
            OwnedBackend::Dense(index) => SearchBackend::Dense(index),
            OwnedBackend::Bm25(index) => SearchBackend::Bm25(index),
        }
    }
}

fn cmd_retrieve(args: RetrieveArgs) -> Result<ExitCode> {
    let corpus = load_corpus(&args.corpus, Granularity::Sentence)?;
    let backend = OwnedBackend::open(args.run.retriever, args.index.as_deref(), &corpus)?;
    let encoder = args.encoder.to_config()?;
    let queries = load_queries(&args.queries)?;
    let params = Stage1Params {
        retriever: args.run.retriever,
        k: args.run.k,
        nprobe: args.run.nprobe,
        encoder,
    };
    let threads = threads_of(&args.run);
    let outcomes: Vec<Result<(Query, Vec<ScoredCandidate>)>> =
        util::parallel_map(&queries, threads, |query| {
            let candidates =
                pipeline::retrieve_stage1(&params, &backend.as_backend(), &corpus, &query.text)?;
            Ok((query.clone(), candidates))
        });

    let mut results = Vec::new();
    let mut failures = 0usize;
    for outcome in outcomes {
        match outcome {
            Ok((query, candidates)) => {
                if candidates.is_empty() {
                    eprintln!(
                        "warning: query {:?} produced no candidates (empty after tokenization?)",
                        query.query_id
                    );
                }
                let outcome = pipeline::QueryOutcome {
                    query,
                    candidates,
                    reranked: Vec::new(),
                };
                results.push(QueryResult::from_outcome(&outcome, args.run.seed));
            }
            Err(e) => {
                eprintln!("query failed: {e}");
                failures += 1;
            }
        }
    }
    util::write_jsonl(&args.out, &results)?;
    println!(
        "retrieved candidates for {} queries -> {}",
        results.len(),
        args.out.display()
    );
    Ok(exit_for_failures(failures))
}

fn candidates_from_result(result: &QueryResult, corpus: &Corpus) -> Result<Vec<ScoredCandidate>> {
    result
        .candidates
        .iter()
        .map(|c| {
            let evidence = corpus
                .get(c.id)
                .ok_or(Error::UnknownEvidenceId { id: c.id })?
                .clone();
            Ok(ScoredCandidate {
                evidence,
                stage1_inner_product: c.stage1_ip,
                stage1_score: c.stage1_score,
                stage1_rank: c.stage1_rank,
            })
        })
        .collect()
}

fn cmd_rerank(args: RerankArgs) -> Result<ExitCode> {
    let corpus = load_corpus(&args.corpus, Granularity::Sentence)?;
    let task = TaskSpec::from_file(&args.task)?;
    let stage1 = args.encoder.to_config()?;
    let stage2 = args.stage2.to_config(&stage1)?;
    let results: Vec<QueryResult> = util::read_jsonl(&args.results)?;

    let mut config = PipelineConfig::new(task, stage1, stage2);
    config.k = args.run.k.max(args.run.d);
    config.d = args.run.d;
    config.m = args.run.m;
    config.prompt_seed = args.run.seed;
    config.balanced_prompt = args.run.balanced;
    config.validate()?;
    let prefix = crate::prompts::build_prefix(
        &config.task,
        config.m,
        config.prompt_seed,
        config.balanced_prompt,
    )?;

    let threads = threads_of(&args.run);
    let reranked: Vec<Result<QueryResult>> = util::parallel_map(&results, threads, |result| {
        let candidates = candidates_from_result(result, &corpus)?;
        let mut items = pipeline::rerank_with_prefix(&config, &prefix, &result.query_text, &candidates)?;
        items.truncate(config.d);
        let outcome = pipeline::QueryOutcome {
            query: Query {
                query_id: result.query_id.clone(),
                text: result.query_text.clone(),
                label: None,
            },
            candidates,
            reranked: items,
        };
        Ok(QueryResult::from_outcome(&outcome, config.prompt_seed))
    });

    let mut out = Vec::new();
    let mut failures = 0usize;
    for item in reranked {
        match item {
            Ok(result) => out.push(result),
            Err(e) => {
                eprintln!("query failed: {e}");
                failures += 1;
            }
        }
    }
    util::write_jsonl(&args.out, &out)?;
    println!("reranked {} queries -> {}", out.len(), args.out.display());
    Ok(exit_for_failures(failures))
}

fn build_pipeline_config(
    task: TaskSpec,
    run: &RunArgs,
    encoder: &EncoderArgs,
    stage2: &Stage2Args,
) -> Result<PipelineConfig> {
    let stage1 = encoder.to_config()?;
    let stage2 = stage2.to_config(&stage1)?;
    let mut config = PipelineConfig::new(task, stage1, stage2);
    config.k = run.k;
    config.d = run.d;
    config.m = run.m;
    config.prompt_seed = run.seed;
    config.retriever = run.retriever;
    config.nprobe = run.nprobe;
    config.balanced_prompt = run.balanced;
    config.validate()?;
    Ok(config)
}

fn cmd_pipeline(args: PipelineArgs) -> Result<ExitCode> {
    let task = TaskSpec::from_file(&args.task)?;
    let mut corpus = load_corpus(&args.corpus, args.granularity)?;
    if let Some(labels) = &args.labels {
        let (labeled, warnings) = corpus::attach_pseudo_labels(corpus, labels, Some(&task))?;
        for warning in warnings {
            eprintln!("warning: {warning}");
        }
        corpus = labeled;
    }
    let backend = OwnedBackend::open(args.run.retriever, args.index.as_deref(), &corpus)?;
    let queries = load_queries(&args.queries)?;
    let config = build_pipeline_config(task, &args.run, &args.encoder, &args.stage2)?;

    let run = pipeline::run_pipeline(
        &config,
        &backend.as_backend(),
        &corpus,
        &queries,
        threads_of(&args.run),
    )?;
    for failure in &run.failures {
        eprintln!("query {:?} failed: {}", failure.query_id, failure.message);
    }

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    util::write_jsonl(&args.out.join("results.jsonl"), &run.to_results())?;

    // Vote over pseudo-labels: sidecar labels ride on the evidence records,
    // anything missing comes from the prototype classifier.
    let classifier = reader::fit_prototypes(&config.task, &config.stage1_encoder)?;
    let mut outcomes = run.outcomes;
    let mut predictions = Vec::with_capacity(outcomes.len());
    for outcome in &mut outcomes {
        reader::fill_pseudo_labels(&mut outcome.reranked, &classifier, &config.stage1_encoder)?;
        predictions.push(reader::vote(
            &config.task,
            &outcome.query.query_id,
            &outcome.reranked,
        )?);
    }
    util::write_jsonl(&args.out.join("predictions.jsonl"), &predictions)?;

    let missing_gold = outcomes.iter().filter(|o| o.query.label.is_none()).count();
    if missing_gold > 0 || outcomes.is_empty() {
        println!(
            "metrics skipped: {missing_gold} of {} queries have no gold label",
            outcomes.len()
        );
    } else {
        let golds: Vec<String> = outcomes
            .iter()
            .map(|o| o.query.label.clone().unwrap())
            .collect();
        let predicted: Vec<String> = predictions
            .iter()
            .map(|p| p.predicted_label.clone().unwrap_or_default())
            .collect();
        let value = match config.task.metric {
            Metric::Accuracy => eval::accuracy(&predicted, &golds)?,
            Metric::Matthews => {
                let cm = ConfusionMatrix::from_pairs(&config.task.labels, &golds, &predicted)?;
                eval::matthews(&cm)?
            }
        };
        let report = MetricsReport {
            task: config.task.name.clone(),
            metric: config.task.metric,
            value,
            n: golds.len(),
        };
        util::atomic_write(
            &args.out.join("metrics.json"),
            serde_json::to_string_pretty(&report)
                .expect("in-memory serialization")
                .as_bytes(),
        )?;
        println!(
            "{}: {} = {:.4} over {} queries",
            report.task,
            match report.metric {
                Metric::Accuracy => "accuracy",
                Metric::Matthews => "matthews",
            },
            report.value,
            report.n
        );
    }
    println!(
        "pipeline complete: {} ok, {} failed -> {}",
        outcomes.len(),
        run.failures.len(),
        args.out.display()
    );
    Ok(exit_for_failures(run.failures.len()))
}

fn cmd_pseudo_label(args: PseudoLabelArgs) -> Result<ExitCode> {
    let corpus = load_corpus(&args.corpus, Granularity::Sentence)?;
    let task = TaskSpec::from_file(&args.task)?;
    let encoder = args.encoder.to_config()?;
    let classifier = reader::fit_prototypes(&task, &encoder)?;
    let texts: Vec<String> = corpus.records().iter().map(|r| r.text.clone()).collect();
    let labels = reader::pseudo_label(&classifier, &encoder, &texts)?;

    #[derive(serde::Serialize)]
    struct LabelLine<'a> {
        id: u64,
        label: &'a str,
    }
    let lines: Vec<LabelLine> = corpus
        .records()
        .iter()
        .zip(&labels)
        .map(|(r, label)| LabelLine {
            id: r.id,
            label,
        })
        .collect();
    util::write_jsonl(&args.out, &lines)?;
    println!("labeled {} records -> {}", lines.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<ExitCode> {
    let task = TaskSpec::from_file(&args.task)?;
    let queries = load_queries(&args.queries)?;
    let predictions: Vec<Prediction> = util::read_jsonl(&args.predictions)?;
    let by_id: HashMap<&str, &Prediction> = predictions
        .iter()
        .map(|p| (p.query_id.as_str(), p))
        .collect();
    let mut golds = Vec::new();
    let mut predicted = Vec::new();
    for query in &queries {
        let gold = query.label.clone().ok_or_else(|| Error::MissingQueryData {
            query_id: query.query_id.clone(),
            what: "gold label".into(),
        })?;
        let prediction = by_id
            .get(query.query_id.as_str())
            .ok_or_else(|| Error::MissingQueryData {
                query_id: query.query_id.clone(),
                what: "prediction".into(),
            })?;
        let label = prediction
            .predicted_label
            .clone()
            .ok_or_else(|| Error::MissingQueryData {
                query_id: query.query_id.clone(),
                what: "non-abstaining prediction".into(),
            })?;
        golds.push(gold);
        predicted.push(label);
    }
    let value = match task.metric {
        Metric::Accuracy => eval::accuracy(&predicted, &golds)?,
        Metric::Matthews => {
            let cm = ConfusionMatrix::from_pairs(&task.labels, &golds, &predicted)?;
            eval::matthews(&cm)?
        }
    };
    let report = MetricsReport {
        task: task.name.clone(),
        metric: task.metric,
        value,
        n: golds.len(),
    };
    util::atomic_write(
        &args.out,
        serde_json::to_string_pretty(&report)
            .expect("in-memory serialization")
            .as_bytes(),
    )?;
    println!("{}", serde_json::to_string(&report).unwrap());
    Ok(ExitCode::SUCCESS)
}

fn cmd_consistency(args: ConsistencyArgs) -> Result<ExitCode> {
    let results: Vec<QueryResult> = util::read_jsonl(&args.results)?;

    #[derive(serde::Deserialize)]
    struct LabelLine {
        id: u64,
        label: String,
    }
    let label_lines: Vec<LabelLine> = util::read_jsonl(&args.labels)?;
    let pseudo: HashMap<u64, String> = label_lines
        .into_iter()
        .map(|l| (l.id, l.label))
        .collect();

    let queries = load_queries(&args.queries)?;
    let mut golds = HashMap::new();
    for query in &queries {
        let gold = query.label.clone().ok_or_else(|| Error::MissingQueryData {
            query_id: query.query_id.clone(),
            what: "gold label".into(),
        })?;
        golds.insert(query.query_id.clone(), gold);
    }

    let prediction_lines: Vec<Prediction> = util::read_jsonl(&args.predictions)?;
    let predictions: HashMap<String, String> = prediction_lines
        .into_iter()
        .filter_map(|p| p.predicted_label.map(|label| (p.query_id, label)))
        .collect();

    let report = eval::consistency_report(&results, &pseudo, &golds, &predictions, args.d)?;
    util::atomic_write(
        &args.out,
        serde_json::to_string_pretty(&report)
            .expect("in-memory serialization")
            .as_bytes(),
    )?;
    if let Some(csv_path) = &args.csv {
        util::atomic_write(csv_path, report.to_csv().as_bytes())?;
    }
    println!(
        "mean consistency score {:.4} over {} instances -> {}",
        report.mean_consistency_score,
        report.buckets.iter().map(|b| b.n_instances).sum::<usize>(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode> {
    if args.ks.is_empty() || args.ds.is_empty() {
        return Err(Error::InvalidConfig("--ks and --ds must be non-empty".into()));
    }
    let task = TaskSpec::from_file(&args.task)?;
    let mut corpus = load_corpus(&args.corpus, args.granularity)?;
    if let Some(labels) = &args.labels {
        let (labeled, warnings) = corpus::attach_pseudo_labels(corpus, labels, Some(&task))?;
        for warning in warnings {
            eprintln!("warning: {warning}");
        }
        corpus = labeled;
    }
    let config = build_pipeline_config(task, &args.run, &args.encoder, &args.stage2)?;

    // The vote reader needs a pseudo-label on every retrievable record:
    // classify whatever the sidecar did not cover.
    let classifier = reader::fit_prototypes(&config.task, &config.stage1_encoder)?;
    let unlabeled: Vec<u64> = corpus
        .records()
        .iter()
        .filter(|r| r.pseudo_label.is_none())
        .map(|r| r.id)
        .collect();
    if !unlabeled.is_empty() {
        let texts: Vec<String> = unlabeled
            .iter()
            .map(|id| corpus.get(*id).unwrap().text.clone())
            .collect();
        let labels = reader::pseudo_label(&classifier, &config.stage1_encoder, &texts)?;
        let mut records = corpus.records().to_vec();
        let by_id: HashMap<u64, String> = unlabeled.into_iter().zip(labels).collect();
        for record in &mut records {
            if record.pseudo_label.is_none() {
                record.pseudo_label = by_id.get(&record.id).cloned();
            }
        }
        corpus = Corpus::from_records(records, corpus.granularity())?;
    }

    let backend = OwnedBackend::open(args.run.retriever, args.index.as_deref(), &corpus)?;
    let queries = load_queries(&args.queries)?;
    let cells = eval::sweep(
        &config,
        &backend.as_backend(),
        &corpus,
        &queries,
        &args.ks,
        &args.ds,
        threads_of(&args.run),
    );
    let failed = cells.iter().filter(|c| c.value.is_none()).count();
    for cell in cells.iter().filter(|c| c.error.is_some()) {
        eprintln!(
            "cell k={} d={} failed: {}",
            cell.k,
            cell.d,
            cell.error.as_deref().unwrap_or("unknown")
        );
    }
    util::atomic_write(&args.out, eval::sweep_csv(&cells).as_bytes())?;
    println!(
        "swept {} grid points ({} failed) -> {}",
        cells.len(),
        failed,
        args.out.display()
    );
    Ok(exit_for_failures(failed))
}

fn cmd_export_reader_pack(args: ExportArgs) -> Result<ExitCode> {
    let corpus = load_corpus(&args.corpus, Granularity::Sentence)?;
    let task = TaskSpec::from_file(&args.task)?;
    let queries = load_queries(&args.queries)?;
    let results: Vec<QueryResult> = util::read_jsonl(&args.results)?;
    let mut reranked = Vec::with_capacity(results.len());
    for result in &results {
        let items: Vec<RerankedEvidence> = result
            .reranked
            .iter()
            .map(|r| {
                let evidence = corpus
                    .get(r.id)
                    .ok_or(Error::UnknownEvidenceId { id: r.id })?
                    .clone();
                Ok(RerankedEvidence {
                    evidence,
                    stage2_inner_product: r.stage2_ip,
                    stage2_score: r.stage2_score,
                    stage2_rank: r.stage2_rank,
                    stage1_rank: r.stage1_rank,
                })
            })
            .collect::<Result<_>>()?;
        reranked.push((result.query_id.clone(), items));
    }
    reader::export_reader_pack(&task, &queries, &reranked, &args.out)?;
    println!("exported {} queries -> {}", queries.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn exit_for_failures(failures: usize) -> ExitCode {
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
