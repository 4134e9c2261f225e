//! The two-stage retrieval pipeline.
//!
//! Stage 1 pulls top-k candidates with a task-agnostic score: inner product
//! against the dense index, or BM25 against the corpus. Stage 2 re-encodes
//! the query and every candidate behind the task's few-shot prefix and
//! reorders by inner product of those prompted representations, keeping the
//! top-d.
//!
//! Scores are softmax-normalized over the candidate set actually returned
//! (`normalized_over_topk` in the results schema): a full-resource softmax
//! would cost a corpus scan per query and, being strictly monotone, could
//! never change the ranking.

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, EvidenceRecord};
use crate::encoder::{encode_batch, encode_prompted_batch, Bm25Index, Bm25Params, EncoderConfig};
use crate::error::{Error, Result};
use crate::index::DenseIndex;
use crate::prompts::{build_prefix, render_query_prompt, PromptPrefix, TaskSpec};
use crate::util::{parallel_map, softmax};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RetrieverKind {
    Dense,
    Bm25,
}

/// Everything a pipeline run needs besides the data itself.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Stage-1 candidate depth.
    pub k: usize,
    /// Stage-2 selection depth; must not exceed `k`.
    pub d: usize,
    pub retriever: RetrieverKind,
    pub nprobe: Option<usize>,
    pub stage1_encoder: EncoderConfig,
    pub stage2_encoder: EncoderConfig,
    pub task: TaskSpec,
    pub prompt_seed: u64,
    /// Shot count for the stage-2 prefix.
    pub m: usize,
    pub balanced_prompt: bool,
    pub bm25: Bm25Params,
}

impl PipelineConfig {
    pub fn new(task: TaskSpec, stage1_encoder: EncoderConfig, stage2_encoder: EncoderConfig) -> Self {
        PipelineConfig {
            k: 150,
            d: 16,
            retriever: RetrieverKind::Dense,
            nprobe: None,
            stage1_encoder,
            stage2_encoder,
            task,
            prompt_seed: 0,
            m: 8,
            balanced_prompt: false,
            bm25: Bm25Params::default(),
        }
    }

    pub fn with_depths(mut self, k: usize, d: usize) -> Result<Self> {
        self.k = k;
        self.d = d;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.d == 0 {
            return Err(Error::InvalidConfig("k and d must be at least 1".into()));
        }
        if self.d > self.k {
            return Err(Error::InvalidConfig(format!(
                "d ({}) must not exceed k ({})",
                self.d, self.k
            )));
        }
        if self.m == 0 {
            return Err(Error::InvalidConfig("m must be at least 1".into()));
        }
        self.stage1_encoder.validate()?;
        self.stage2_encoder.validate()?;
        self.bm25.validate()?;
        self.task.validate()
    }
}

/// Stage-1 data source; must agree with `PipelineConfig::retriever`.
pub enum SearchBackend<'a> {
    Dense(&'a DenseIndex),
    Bm25(&'a Bm25Index),
}

/// A stage-1 candidate. `stage1_score` is the softmax of the stage-1 scores
/// over the returned candidate set.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub evidence: EvidenceRecord,
    pub stage1_inner_product: f64,
    pub stage1_score: f64,
    pub stage1_rank: usize,
}

/// A candidate after prompt-guided rescoring. `stage2_score` is softmaxed
/// over all k candidates, so the scores of an emitted top-d list sum to at
/// most 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RerankedEvidence {
    pub evidence: EvidenceRecord,
    pub stage2_inner_product: f64,
    pub stage2_score: f64,
    pub stage2_rank: usize,
    pub stage1_rank: usize,
}

/// One input query; `label` is the optional gold label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    #[serde(deserialize_with = "crate::pipeline::deser_query_id")]
    pub query_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

pub(crate) fn deser_query_id<'de, D>(deserializer: D) -> std::result::Result<String, D::Error>
where
    D: serde::Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum IdRepr {
        Text(String),
        Number(u64),
    }
    Ok(match IdRepr::deserialize(deserializer)? {
        IdRepr::Text(s) => s,
        IdRepr::Number(n) => n.to_string(),
    })
}

/// Stage-1 knobs alone, for retrieval without a task in scope.
#[derive(Debug, Clone)]
pub struct Stage1Params {
    pub retriever: RetrieverKind,
    pub k: usize,
    pub nprobe: Option<usize>,
    pub encoder: EncoderConfig,
}

impl PipelineConfig {
    pub fn stage1_params(&self) -> Stage1Params {
        Stage1Params {
            retriever: self.retriever,
            k: self.k,
            nprobe: self.nprobe,
            encoder: self.stage1_encoder.clone(),
        }
    }
}

/// Stage-1 retrieval: top-k candidates for one query.
pub fn retrieve(
    config: &PipelineConfig,
    backend: &SearchBackend<'_>,
    corpus: &Corpus,
    query: &str,
) -> Result<Vec<ScoredCandidate>> {
    config.validate()?;
    retrieve_stage1(&config.stage1_params(), backend, corpus, query)
}

/// Stage-1 retrieval from bare parameters.
pub fn retrieve_stage1(
    params: &Stage1Params,
    backend: &SearchBackend<'_>,
    corpus: &Corpus,
    query: &str,
) -> Result<Vec<ScoredCandidate>> {
    if params.k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let scored: Vec<(u64, f64)> = match (params.retriever, backend) {
        (RetrieverKind::Dense, SearchBackend::Dense(index)) => {
            if index.dim() != params.encoder.dim {
                return Err(Error::DimMismatch {
                    context: "stage-1 index vs encoder".into(),
                    expected: params.encoder.dim,
                    actual: index.dim(),
                });
            }
            let q = encode_batch(&params.encoder, &[query.to_string()])?
                .pop()
                .expect("one vector per text");
            index
                .search(&q, params.k, params.nprobe)?
                .into_iter()
                .map(|hit| (hit.id, hit.inner_product))
                .collect()
        }
        (RetrieverKind::Bm25, SearchBackend::Bm25(index)) => {
            let mut all = index.score_all(query);
            all.truncate(params.k);
            all
        }
        _ => {
            return Err(Error::InvalidConfig(
                "retriever kind does not match the provided backend".into(),
            ))
        }
    };
    let scores = softmax(&scored.iter().map(|(_, s)| *s).collect::<Vec<_>>());
    scored
        .into_iter()
        .zip(scores)
        .enumerate()
        .map(|(i, ((id, raw), score))| {
            let evidence = corpus
                .get(id)
                .ok_or(Error::UnknownEvidenceId { id })?
                .clone();
            Ok(ScoredCandidate {
                evidence,
                stage1_inner_product: raw,
                stage1_score: score,
                stage1_rank: i + 1,
            })
        })
        .collect()
}

/// Stage-2 rescoring of the full candidate list under an already-rendered
/// prefix. Returns every candidate, sorted by (stage-2 inner product
/// descending, id ascending), scores softmaxed over the whole list.
pub fn rerank_with_prefix(
    config: &PipelineConfig,
    prefix: &PromptPrefix,
    query: &str,
    candidates: &[ScoredCandidate],
) -> Result<Vec<RerankedEvidence>> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("rerank requires at least one candidate".into()));
    }
    // One batch per query: the query prompt plus k evidence prompts.
    let mut bodies = Vec::with_capacity(candidates.len() + 1);
    bodies.push(render_query_prompt(&config.task, query)?);
    for candidate in candidates {
        bodies.push(render_query_prompt(&config.task, &candidate.evidence.text)?);
    }
    let mut encoded = encode_prompted_batch(&config.stage2_encoder, &prefix.text, &bodies)?;
    let evidence_vectors = encoded.split_off(1);
    let query_vector = encoded.pop().expect("query vector");

    let ips: Vec<f64> = evidence_vectors
        .iter()
        .map(|v| query_vector.dot(v) as f64)
        .collect();
    let scores = softmax(&ips);
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        ips[b]
            .partial_cmp(&ips[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(candidates[a].evidence.id.cmp(&candidates[b].evidence.id))
    });
    Ok(order
        .into_iter()
        .enumerate()
        .map(|(rank, i)| RerankedEvidence {
            evidence: candidates[i].evidence.clone(),
            stage2_inner_product: ips[i],
            stage2_score: scores[i],
            stage2_rank: rank + 1,
            stage1_rank: candidates[i].stage1_rank,
        })
        .collect())
}

/// Stage-2 reranking: renders the prefix from the config, rescoring the
/// candidates and returning the top-min(d, |candidates|).
pub fn rerank(
    config: &PipelineConfig,
    query: &str,
    candidates: &[ScoredCandidate],
) -> Result<Vec<RerankedEvidence>> {
    config.validate()?;
    let prefix = build_prefix(
        &config.task,
        config.m,
        config.prompt_seed,
        config.balanced_prompt,
    )?;
    let mut all = rerank_with_prefix(config, &prefix, query, candidates)?;
    all.truncate(config.d);
    Ok(all)
}

/// Per-query outcome of a full pipeline run.
#[derive(Debug, Clone)]
pub struct QueryOutcome {
    pub query: Query,
    pub candidates: Vec<ScoredCandidate>,
    pub reranked: Vec<RerankedEvidence>,
}

#[derive(Debug, Clone, Serialize)]
pub struct QueryFailure {
    pub query_id: String,
    pub message: String,
}

/// A full run: one prefix sampled per run, per-query failures recorded
/// without aborting the rest.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub prefix: PromptPrefix,
    pub outcomes: Vec<QueryOutcome>,
    pub failures: Vec<QueryFailure>,
}

/// Execute retrieve-then-rerank for every query. Queries are independent and
/// processed on up to `threads` workers; output order follows input order.
pub fn run_pipeline(
    config: &PipelineConfig,
    backend: &SearchBackend<'_>,
    corpus: &Corpus,
    queries: &[Query],
    threads: usize,
) -> Result<PipelineRun> {
    config.validate()?;
    let prefix = build_prefix(
        &config.task,
        config.m,
        config.prompt_seed,
        config.balanced_prompt,
    )?;

    let per_query = parallel_map(queries, threads, |query| {
        let candidates = retrieve(config, backend, corpus, &query.text)?;
        let mut reranked = rerank_with_prefix(config, &prefix, &query.text, &candidates)?;
        reranked.truncate(config.d);
        Ok::<_, Error>(QueryOutcome {
            query: query.clone(),
            candidates,
            reranked,
        })
    });

    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for (query, result) in queries.iter().zip(per_query) {
        match result {
            Ok(outcome) => outcomes.push(outcome),
            Err(e) => failures.push(QueryFailure {
                query_id: query.query_id.clone(),
                message: e.to_string(),
            }),
        }
    }
    Ok(PipelineRun {
        prefix,
        outcomes,
        failures,
    })
}

// --- results JSONL schema ---------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateOut {
    pub id: u64,
    pub stage1_rank: usize,
    pub stage1_ip: f64,
    pub stage1_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankedOut {
    pub id: u64,
    pub stage2_rank: usize,
    pub stage2_ip: f64,
    pub stage2_score: f64,
    pub stage1_rank: usize,
}

/// One line of the results JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    #[serde(deserialize_with = "crate::pipeline::deser_query_id")]
    pub query_id: String,
    pub query_text: String,
    pub prefix_seed: u64,
    pub normalized_over_topk: bool,
    pub candidates: Vec<CandidateOut>,
    pub reranked: Vec<RerankedOut>,
}

impl QueryResult {
    pub fn from_outcome(outcome: &QueryOutcome, prefix_seed: u64) -> Self {
        QueryResult {
            query_id: outcome.query.query_id.clone(),
            query_text: outcome.query.text.clone(),
            prefix_seed,
            normalized_over_topk: true,
            candidates: outcome
                .candidates
                .iter()
                .map(|c| CandidateOut {
                    id: c.evidence.id,
                    stage1_rank: c.stage1_rank,
                    stage1_ip: c.stage1_inner_product,
                    stage1_score: c.stage1_score,
                })
                .collect(),
            reranked: outcome
                .reranked
                .iter()
                .map(|r| RerankedOut {
                    id: r.evidence.id,
                    stage2_rank: r.stage2_rank,
                    stage2_ip: r.stage2_inner_product,
                    stage2_score: r.stage2_score,
                    stage1_rank: r.stage1_rank,
                })
                .collect(),
        }
    }
}

impl PipelineRun {
    pub fn to_results(&self) -> Vec<QueryResult> {
        self.outcomes
            .iter()
            .map(|o| QueryResult::from_outcome(o, self.prefix.seed))
            .collect()
    }
}
