//! Shared helpers for integration tests: independent oracle implementations
//! of the hash-encoder pipeline and softmax, plus small file fixtures. The
//! oracle code deliberately re-derives everything from the written rules
//! rather than calling into the library, so the two paths can disagree.
#![allow(dead_code)]

use std::path::Path;

/// Oracle tokenizer: lowercase, whitespace split, strip ASCII punctuation at
/// both ends, drop empties. Written against the rule text, not the library.
pub fn oracle_tokens(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut out = Vec::new();
    for piece in lowered.split_whitespace() {
        let bytes: Vec<char> = piece.chars().collect();
        let mut start = 0usize;
        let mut end = bytes.len();
        while start < end && bytes[start].is_ascii_punctuation() {
            start += 1;
        }
        while end > start && bytes[end - 1].is_ascii_punctuation() {
            end -= 1;
        }
        if end > start {
            out.push(bytes[start..end].iter().collect());
        }
    }
    out
}

/// Oracle FNV-1a, written long-hand.
pub fn oracle_fnv(token: &str) -> u64 {
    let mut state: u64 = 14695981039346656037;
    for byte in token.bytes() {
        state ^= u64::from(byte);
        state = state.wrapping_mul(1099511628211);
    }
    state
}

/// Oracle reference encoding: bag counts at `hash % dim`, L2-normalized
/// unless all-zero.
pub fn oracle_encode(dim: usize, text: &str) -> Vec<f32> {
    let mut v = vec![0.0f32; dim];
    for token in oracle_tokens(text) {
        let idx = (oracle_fnv(&token) % dim as u64) as usize;
        v[idx] += 1.0;
    }
    let norm: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    v
}

/// Plain f32 dot product, the arithmetic any straight-line script would use
/// over f32 vectors.
pub fn oracle_dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = 0.0f32;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// Oracle softmax in f64 with max subtraction.
pub fn oracle_softmax(xs: &[f64]) -> Vec<f64> {
    let mut max = f64::NEG_INFINITY;
    for &x in xs {
        if x > max {
            max = x;
        }
    }
    let mut exps = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for &x in xs {
        let e = (x - max).exp();
        exps.push(e);
        sum += e;
    }
    for e in exps.iter_mut() {
        *e /= sum;
    }
    exps
}

/// Write a corpus JSONL file from (id, text) pairs.
pub fn write_corpus(path: &Path, records: &[(u64, &str)]) {
    let mut body = String::new();
    for (id, text) in records {
        body.push_str(&format!(
            "{}\n",
            serde_json::json!({ "id": id, "text": text })
        ));
    }
    std::fs::write(path, body).unwrap();
}

/// Write a queries JSONL file from (query_id, text, optional gold) triples.
pub fn write_queries(path: &Path, queries: &[(&str, &str, Option<&str>)]) {
    let mut body = String::new();
    for (query_id, text, label) in queries {
        let line = match label {
            Some(label) => serde_json::json!({ "query_id": query_id, "text": text, "label": label }),
            None => serde_json::json!({ "query_id": query_id, "text": text }),
        };
        body.push_str(&format!("{line}\n"));
    }
    std::fs::write(path, body).unwrap();
}

/// Path of a shipped task definition.
pub fn task_path(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tasks")
        .join(format!("{name}.json"))
}
