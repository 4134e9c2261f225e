//! Two-stage evidence retrieval for text classification.
//!
//! Stage 1 recalls top-k candidates from a shared static dense index by
//! maximum inner product (or from a BM25 scorer). Stage 2 reranks those
//! candidates with prompt-conditioned representations: query and evidence are
//! wrapped in a task template behind a few-shot prefix, re-encoded, and
//! reordered by inner product so the selected top-d reflects task-specific
//! relevance rather than generic similarity. A majority-vote reader turns the
//! selected evidence into label predictions, and the eval module measures
//! both task metrics and pseudo-label consistency.
//!
//! Start with the runnable examples:
//!
//! ```bash
//! cargo run -p pgra --example two_stage_pipeline
//! ```
//!
//! File formats and the remote encoder protocol are specified in
//! `docs/protocol.md`.

pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod index;
pub mod pipeline;
pub mod prompts;
pub mod reader;
pub mod rng;
pub mod text;
pub mod util;

pub use corpus::{attach_pseudo_labels, ingest_jsonl, ingest_plaintext, Corpus, EvidenceRecord, Granularity};
pub use encoder::{
    bm25_scores, encode_batch, encode_prompted_batch, Bm25Index, Bm25Params, EmbeddingVector,
    EncoderConfig, EncoderKind, Pooling,
};
pub use error::{Error, Result};
pub use eval::{accuracy, consistency_report, consistency_score, matthews, ConfusionMatrix, ConsistencyReport};
pub use index::{DenseIndex, SearchHit};
pub use pipeline::{
    retrieve, rerank, run_pipeline, PipelineConfig, Query, QueryResult, RerankedEvidence,
    RetrieverKind, ScoredCandidate, SearchBackend,
};
pub use prompts::{
    build_prefix, render_prefix, render_query_prompt, sample_exemplars, Exemplar, Metric,
    PromptPrefix, TaskSpec,
};
pub use reader::{export_reader_pack, fit_prototypes, pseudo_label, vote, Prediction, PrototypeClassifier};
pub use rng::SeededRng;
