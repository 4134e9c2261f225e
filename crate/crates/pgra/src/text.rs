//! Shared tokenization and hashing.
//!
//! The reference encoder and the BM25 scorer tokenize identically: lowercase,
//! split on Unicode whitespace, strip leading/trailing ASCII punctuation per
//! token, drop anything left empty.

/// Tokenize a text for hashing and sparse scoring.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .filter_map(|raw| {
            let token = raw.trim_matches(|c: char| c.is_ascii_punctuation());
            if token.is_empty() {
                None
            } else {
                Some(token.to_string())
            }
        })
        .collect()
}

/// FNV-1a 64-bit hash over the token's UTF-8 bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}
