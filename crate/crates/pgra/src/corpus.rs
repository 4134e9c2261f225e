//! Evidence corpora: ingestion, identity, and pseudo-label sidecars.
//!
//! A corpus is an immutable, id-sorted sequence of evidence records. Ids are
//! stable across re-ingestion so that indexes, sidecar label files, and
//! result files can refer to evidence by id alone.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompts::TaskSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Sentence,
    Passage,
}

/// One unit of external text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub id: u64,
    pub text: String,
    pub granularity: Granularity,
    pub pseudo_label: Option<String>,
}

/// Immutable evidence collection, records sorted ascending by unique id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    records: Vec<EvidenceRecord>,
    granularity: Granularity,
}

/// What ingestion skipped or rewrote, for operator visibility.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub skipped_blank_lines: usize,
    pub skipped_blank_texts: usize,
}

#[derive(Deserialize)]
struct JsonlRecord {
    id: Option<u64>,
    text: String,
}

#[derive(Serialize)]
struct JsonlRecordOut<'a> {
    id: u64,
    text: &'a str,
}

#[derive(Deserialize)]
struct LabelLine {
    id: u64,
    label: String,
}

impl Corpus {
    /// Build from records, enforcing id uniqueness; records are sorted by id.
    pub fn from_records(mut records: Vec<EvidenceRecord>, granularity: Granularity) -> Result<Self> {
        records.sort_by_key(|r| r.id);
        for pair in records.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::DuplicateId {
                    id: pair[0].id,
                    line: 0,
                });
            }
        }
        for r in &records {
            if r.text.trim().is_empty() {
                return Err(Error::InvalidInput(format!(
                    "evidence {} has blank text",
                    r.id
                )));
            }
        }
        Ok(Corpus {
            records,
            granularity,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn records(&self) -> &[EvidenceRecord] {
        &self.records
    }

    /// Look up a record by id (binary search over the sorted records).
    pub fn get(&self, id: u64) -> Option<&EvidenceRecord> {
        self.records
            .binary_search_by_key(&id, |r| r.id)
            .ok()
            .map(|i| &self.records[i])
    }

    /// Single-pass invariant check: ids strictly increasing, texts non-blank.
    pub fn check_invariants(&self) -> bool {
        self.records
            .windows(2)
            .all(|pair| pair[0].id < pair[1].id)
            && self.records.iter().all(|r| !r.text.trim().is_empty())
    }

    /// Serialize to the corpus JSONL format (`{"id":…,"text":…}` per line).
    /// Pseudo-labels travel in a sidecar file, never here.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        for r in &self.records {
            serde_json::to_writer(
                &mut buf,
                &JsonlRecordOut {
                    id: r.id,
                    text: &r.text,
                },
            )
            .expect("in-memory serialization");
            buf.push(b'\n');
        }
        crate::util::atomic_write(path, &buf)
    }
}

/// Ingest a JSONL corpus file. Records without an explicit `id` get the next
/// unused sequential id starting from 0. Blank lines and records whose text
/// trims to empty are skipped and counted.
pub fn ingest_jsonl(path: &Path, granularity: Granularity) -> Result<(Corpus, IngestStats)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut stats = IngestStats::default();
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let mut next_auto: u64 = 0;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            stats.skipped_blank_lines += 1;
            continue;
        }
        let raw: JsonlRecord = serde_json::from_str(&line).map_err(|e| Error::JsonLine {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        if raw.text.trim().is_empty() {
            stats.skipped_blank_texts += 1;
            continue;
        }
        let id = match raw.id {
            Some(id) => id,
            None => {
                while seen.contains(&next_auto) {
                    next_auto += 1;
                }
                next_auto
            }
        };
        if !seen.insert(id) {
            return Err(Error::DuplicateId { id, line: line_no });
        }
        records.push(EvidenceRecord {
            id,
            text: raw.text,
            granularity,
            pseudo_label: None,
        });
    }
    Ok((Corpus::from_records(records, granularity)?, stats))
}

/// Ingest a plaintext file, one evidence unit per line, sentence granularity.
/// Ids are 0-based indices among non-blank lines. Trailing `\r` is stripped so
/// CRLF and LF encodings of the same content ingest identically.
pub fn ingest_plaintext(path: &Path) -> Result<(Corpus, IngestStats)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut stats = IngestStats::default();
    let mut records = Vec::new();
    let mut next_id: u64 = 0;
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            stats.skipped_blank_lines += 1;
            continue;
        }
        records.push(EvidenceRecord {
            id: next_id,
            text: line.to_string(),
            granularity: Granularity::Sentence,
            pseudo_label: None,
        });
        next_id += 1;
    }
    Ok((Corpus::from_records(records, Granularity::Sentence)?, stats))
}

/// Attach pseudo-labels from a `{id, label}` JSONL sidecar. Every referenced
/// id must exist; when a task is supplied, every label must be in its label
/// set. Relabeling an id keeps the last assignment and emits a warning.
pub fn attach_pseudo_labels(
    corpus: Corpus,
    labels_path: &Path,
    task: Option<&TaskSpec>,
) -> Result<(Corpus, Vec<String>)> {
    let lines: Vec<LabelLine> = crate::util::read_jsonl(labels_path)?;
    let mut corpus = corpus;
    let mut warnings = Vec::new();
    for line in lines {
        if let Some(task) = task {
            if !task.labels.contains(&line.label) {
                return Err(Error::UnknownLabel {
                    label: line.label,
                    task: task.name.clone(),
                });
            }
        }
        let idx = corpus
            .records
            .binary_search_by_key(&line.id, |r| r.id)
            .map_err(|_| Error::UnknownEvidenceId { id: line.id })?;
        let record = &mut corpus.records[idx];
        if let Some(previous) = &record.pseudo_label {
            if previous != &line.label {
                warnings.push(format!(
                    "id {} relabeled {:?} -> {:?} (last assignment wins)",
                    line.id, previous, line.label
                ));
            }
        }
        record.pseudo_label = Some(line.label);
    }
    Ok((corpus, warnings))
}
