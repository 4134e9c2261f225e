//! Text encoders.
//!
//! Two encoder kinds hide behind one config: a deterministic hashed
//! bag-of-words reference encoder that runs everywhere, and a remote HTTP
//! encoder speaking the protocol in `docs/protocol.md`. Both expose the same
//! two entry points: raw encoding for stage-1 indexing and prompted encoding
//! for stage-2 reranking.
//!
//! Reference encoder, normative definition: lowercase the text; split on
//! Unicode whitespace; strip leading/trailing ASCII punctuation per token;
//! drop empty tokens; FNV-1a 64-bit hash each token's UTF-8 bytes; add 1.0 at
//! `hash % dim`; L2-normalize unless the vector is all zero. Prompted
//! encoding hashes `prefix + "\n" + text` through the same pipeline.

mod bm25;
mod remote;
pub mod stub;

pub use bm25::{bm25_scores, Bm25Index, Bm25Params};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{fnv1a64, tokenize};

/// Fixed-dimension embedding; all values finite by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("embedding has dimension 0".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "embedding contains non-finite value {bad}"
            )));
        }
        Ok(EmbeddingVector { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn l2_norm(&self) -> f32 {
        self.values.iter().map(|v| v * v).sum::<f32>().sqrt()
    }

    /// Scale to unit norm; the zero vector is left untouched.
    pub fn normalized(mut self) -> Self {
        let norm = self.l2_norm();
        if norm > 0.0 {
            for v in &mut self.values {
                *v /= norm;
            }
        }
        self
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f32 {
        debug_assert_eq!(self.dim(), other.dim());
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a * b)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Cls,
    Mean,
    LastToken,
}

impl Pooling {
    pub fn as_str(&self) -> &'static str {
        match self {
            Pooling::Cls => "cls",
            Pooling::Mean => "mean",
            Pooling::LastToken => "last_token",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    ReferenceHash,
    Remote,
}

/// Encoder configuration. Immutable; encode calls may run concurrently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub dim: usize,
    pub endpoint: Option<String>,
    pub normalize: bool,
    pub batch_size: usize,
    pub timeout_ms: u64,
    pub pooling: Pooling,
    pub max_text_bytes: usize,
}

impl EncoderConfig {
    pub fn reference(dim: usize) -> Self {
        EncoderConfig {
            kind: EncoderKind::ReferenceHash,
            dim,
            endpoint: None,
            normalize: false,
            batch_size: 32,
            timeout_ms: 10_000,
            pooling: Pooling::Cls,
            max_text_bytes: 65_536,
        }
    }

    pub fn remote(endpoint: impl Into<String>, dim: usize) -> Self {
        EncoderConfig {
            kind: EncoderKind::Remote,
            dim,
            endpoint: Some(endpoint.into()),
            normalize: false,
            batch_size: 32,
            timeout_ms: 10_000,
            pooling: Pooling::Cls,
            max_text_bytes: 65_536,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidConfig("encoder dim must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.kind == EncoderKind::Remote && self.endpoint.is_none() {
            return Err(Error::InvalidConfig(
                "remote encoder requires an endpoint".into(),
            ));
        }
        Ok(())
    }

    fn check_texts(&self, texts: &[String]) -> Result<()> {
        if texts.is_empty() {
            return Err(Error::InvalidInput("encode called with no texts".into()));
        }
        for (index, text) in texts.iter().enumerate() {
            if text.len() > self.max_text_bytes {
                return Err(Error::TextTooLong {
                    index,
                    len: text.len(),
                    max: self.max_text_bytes,
                });
            }
        }
        Ok(())
    }
}

fn reference_encode_one(dim: usize, text: &str) -> EmbeddingVector {
    let mut values = vec![0.0f32; dim];
    for token in tokenize(text) {
        let slot = (fnv1a64(token.as_bytes()) % dim as u64) as usize;
        values[slot] += 1.0;
    }
    EmbeddingVector { values }.normalized()
}

/// Encode raw texts, one vector per input, order preserved.
pub fn encode_batch(config: &EncoderConfig, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
    config.validate()?;
    config.check_texts(texts)?;
    match config.kind {
        EncoderKind::ReferenceHash => Ok(texts
            .iter()
            .map(|t| reference_encode_one(config.dim, t))
            .collect()),
        EncoderKind::Remote => remote::encode(config, remote::Mode::Raw, texts),
    }
}

/// Encode prompt-prefixed texts. The reference encoder hashes
/// `prefix + "\n" + text`; the remote protocol carries the prefix separately
/// in `prompted` mode and returns the final-position hidden state per text.
pub fn encode_prompted_batch(
    config: &EncoderConfig,
    prefix: &str,
    texts: &[String],
) -> Result<Vec<EmbeddingVector>> {
    config.validate()?;
    config.check_texts(texts)?;
    match config.kind {
        EncoderKind::ReferenceHash => Ok(texts
            .iter()
            .map(|t| reference_encode_one(config.dim, &format!("{prefix}\n{t}")))
            .collect()),
        EncoderKind::Remote => remote::encode(config, remote::Mode::Prompted(prefix), texts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(texts: &[&str]) -> Vec<String> {
        texts.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn duplicate_tokens_normalize_to_same_direction() {
        let config = EncoderConfig::reference(8);
        let out = encode_batch(&config, &s(&["a a", "a"])).unwrap();
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn whitespace_only_text_is_zero_vector() {
        let config = EncoderConfig::reference(8);
        let out = encode_batch(&config, &s(&["  "])).unwrap();
        assert_eq!(out[0].l2_norm(), 0.0);
    }

    #[test]
    fn reference_vector_matches_hand_computed_pipeline() {
        // Independent recomputation of the tokenizer + FNV-1a + modulo + L2
        // steps, written out long-hand.
        let dim = 16usize;
        let mut expected = vec![0.0f32; dim];
        for token in ["hello", "world"] {
            let mut h: u64 = 0xcbf29ce484222325;
            for b in token.as_bytes() {
                h ^= *b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
            expected[(h % dim as u64) as usize] += 1.0;
        }
        let norm = expected.iter().map(|v| v * v).sum::<f32>().sqrt();
        for v in &mut expected {
            *v /= norm;
        }

        let config = EncoderConfig::reference(dim);
        let out = encode_batch(&config, &s(&["hello world"])).unwrap();
        assert_eq!(out[0].values(), expected.as_slice());
    }

    #[test]
    fn normalized_outputs_have_unit_norm() {
        let config = EncoderConfig::reference(32);
        let out = encode_batch(&config, &s(&["some words here", "more text"])).unwrap();
        for v in out {
            assert!((v.l2_norm() - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn order_preservation_matches_single_calls() {
        let config = EncoderConfig::reference(16);
        let batch = encode_batch(&config, &s(&["first text", "second text"])).unwrap();
        let first = encode_batch(&config, &s(&["first text"])).unwrap();
        let second = encode_batch(&config, &s(&["second text"])).unwrap();
        assert_eq!(batch[0], first[0]);
        assert_eq!(batch[1], second[0]);
    }

    #[test]
    fn reference_encoding_is_bit_deterministic() {
        let config = EncoderConfig::reference(64);
        let a = encode_batch(&config, &s(&["determinism check"])).unwrap();
        let b = encode_batch(&config, &s(&["determinism check"])).unwrap();
        assert_eq!(a[0].values(), b[0].values());
    }

    #[test]
    fn prompted_with_empty_prefix_equals_raw() {
        let config = EncoderConfig::reference(16);
        let prompted = encode_prompted_batch(&config, "", &s(&["plain text"])).unwrap();
        let raw = encode_batch(&config, &s(&["plain text"])).unwrap();
        assert_eq!(prompted, raw);
    }

    #[test]
    fn prompted_identical_texts_identical_vectors() {
        let config = EncoderConfig::reference(16);
        let out = encode_prompted_batch(&config, "Some prefix.", &s(&["t", "t"])).unwrap();
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn empty_batch_is_an_error() {
        let config = EncoderConfig::reference(8);
        assert!(encode_batch(&config, &[]).is_err());
    }

    #[test]
    fn oversized_text_is_an_error() {
        let mut config = EncoderConfig::reference(8);
        config.max_text_bytes = 4;
        let err = encode_batch(&config, &s(&["tiny", "not tiny"])).unwrap_err();
        assert!(matches!(err, Error::TextTooLong { index: 1, .. }));
    }

    #[test]
    fn remote_without_endpoint_is_rejected() {
        let mut config = EncoderConfig::reference(8);
        config.kind = EncoderKind::Remote;
        assert!(encode_batch(&config, &s(&["x"])).is_err());
    }
}
