//! Okapi BM25 sparse scoring over a corpus.
//!
//! Tokenization is identical to the reference encoder. Scores follow the
//! classic formula: for each document, sum over query terms of
//! `IDF(t) * tf*(k1+1) / (tf + k1*(1 - b + b*len/avglen))` with
//! `IDF(t) = ln((N - df + 0.5)/(df + 0.5) + 1)`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if self.k1.is_nan() || self.k1 <= 0.0 {
            return Err(Error::InvalidConfig(format!("bm25 k1 must be > 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidConfig(format!("bm25 b must be in [0,1], got {}", self.b)));
        }
        Ok(())
    }
}

struct Posting {
    row: usize,
    term_frequency: u64,
}

/// Inverted index over a corpus, built once and queried many times.
pub struct Bm25Index {
    params: Bm25Params,
    postings: HashMap<String, Vec<Posting>>,
    doc_lengths: Vec<u64>,
    ids: Vec<u64>,
    avg_doc_length: f64,
}

impl Bm25Index {
    pub fn build(corpus: &Corpus, params: Bm25Params) -> Result<Self> {
        params.validate()?;
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
        let mut doc_lengths = Vec::with_capacity(corpus.len());
        let mut ids = Vec::with_capacity(corpus.len());
        for (row, record) in corpus.records().iter().enumerate() {
            let tokens = tokenize(&record.text);
            doc_lengths.push(tokens.len() as u64);
            ids.push(record.id);
            let mut counts: HashMap<String, u64> = HashMap::new();
            for token in tokens {
                *counts.entry(token).or_insert(0) += 1;
            }
            for (token, term_frequency) in counts {
                postings
                    .entry(token)
                    .or_default()
                    .push(Posting { row, term_frequency });
            }
        }
        let avg_doc_length =
            doc_lengths.iter().sum::<u64>() as f64 / doc_lengths.len() as f64;
        Ok(Bm25Index {
            params,
            postings,
            doc_lengths,
            ids,
            avg_doc_length,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Score every document against the query. The result covers the whole
    /// corpus (documents matching no term score 0), sorted by score
    /// descending, ties by id ascending. An empty token stream yields an
    /// empty result; the caller decides whether to surface a warning.
    pub fn score_all(&self, query: &str) -> Vec<(u64, f64)> {
        let query_tokens = tokenize(query);
        if query_tokens.is_empty() {
            return Vec::new();
        }
        let n = self.ids.len() as f64;
        let mut scores = vec![0.0f64; self.ids.len()];
        for token in &query_tokens {
            let Some(postings) = self.postings.get(token) else {
                continue;
            };
            let df = postings.len() as f64;
            let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
            for posting in postings {
                let tf = posting.term_frequency as f64;
                let len_norm = 1.0 - self.params.b
                    + self.params.b * self.doc_lengths[posting.row] as f64 / self.avg_doc_length;
                scores[posting.row] += idf * (tf * (self.params.k1 + 1.0))
                    / (tf + self.params.k1 * len_norm);
            }
        }
        let mut out: Vec<(u64, f64)> = self
            .ids
            .iter()
            .zip(scores)
            .map(|(&id, score)| (id, score))
            .collect();
        out.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        out
    }
}

/// One-shot scoring without keeping the index around.
pub fn bm25_scores(params: Bm25Params, corpus: &Corpus, query: &str) -> Result<Vec<(u64, f64)>> {
    Ok(Bm25Index::build(corpus, params)?.score_all(query))
}
