//! Task definitions and prompt rendering.
//!
//! A task is declarative data: a description template with a `{text}` slot,
//! an answer cue, a label set with verbalizers, and an exemplar pool. The
//! stage-2 reranker conditions on a prefix built from a few exemplars; this
//! module owns the exact bytes of that prefix.
//!
//! Rendering rules (normative for this crate):
//! - exemplar block = template with `{text}` substituted, newline, cue + one
//!   space + verbalizer + `.`, then a blank line;
//! - query prompt = template with `{text}` substituted, newline, cue + one
//!   trailing space and nothing else;
//! - exemplar texts are inserted verbatim, substitution is single-pass.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Accuracy,
    Matthews,
}

/// A labeled exemplar drawn from the pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub pool_index: usize,
    pub text: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub text: String,
    pub label: String,
}

/// Declarative task definition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSpec {
    pub name: String,
    pub description_template: String,
    pub answer_cue: String,
    pub labels: Vec<String>,
    pub verbalizers: BTreeMap<String, String>,
    pub metric: Metric,
    pub exemplar_pool: Vec<PoolEntry>,
}

/// Rendered few-shot prefix; `(task, m, seed)` fully determines `text`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptPrefix {
    pub task: String,
    pub m: usize,
    pub exemplar_ids: Vec<usize>,
    pub text: String,
    pub seed: u64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PoolField {
    Inline(Vec<PoolEntry>),
    External { path: String },
}

#[derive(Deserialize)]
struct TaskFile {
    name: String,
    description_template: String,
    answer_cue: String,
    labels: Vec<String>,
    verbalizers: BTreeMap<String, String>,
    metric: Metric,
    exemplar_pool: PoolField,
}

impl TaskSpec {
    /// Load a task definition from JSON. An external exemplar pool path is
    /// resolved relative to the task file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: TaskFile = serde_json::from_str(&raw).map_err(|e| Error::TaskFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let exemplar_pool = match file.exemplar_pool {
            PoolField::Inline(entries) => entries,
            PoolField::External { path: pool_rel } => {
                let base = path.parent().unwrap_or_else(|| Path::new("."));
                let pool_path = base.join(pool_rel);
                crate::util::read_jsonl(&pool_path)?
            }
        };
        let task = TaskSpec {
            name: file.name,
            description_template: file.description_template,
            answer_cue: file.answer_cue,
            labels: file.labels,
            verbalizers: file.verbalizers,
            metric: file.metric,
            exemplar_pool,
        };
        task.validate().map_err(|e| Error::TaskFile {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.is_empty() {
            return Err(Error::InvalidConfig("task has no labels".into()));
        }
        if self.description_template.matches("{text}").count() != 1 {
            return Err(Error::InvalidConfig(format!(
                "description_template of {:?} must contain {{text}} exactly once",
                self.name
            )));
        }
        let mut surfaces = std::collections::HashSet::new();
        for label in &self.labels {
            let verbalizer = self
                .verbalizers
                .get(label)
                .ok_or_else(|| Error::MissingVerbalizer {
                    label: label.clone(),
                })?;
            if !surfaces.insert(verbalizer) {
                return Err(Error::InvalidConfig(format!(
                    "verbalizer {verbalizer:?} is shared by two labels"
                )));
            }
        }
        for label in self.verbalizers.keys() {
            if !self.labels.contains(label) {
                return Err(Error::InvalidConfig(format!(
                    "verbalizer for unknown label {label:?}"
                )));
            }
        }
        for entry in &self.exemplar_pool {
            if !self.labels.contains(&entry.label) {
                return Err(Error::UnknownLabel {
                    label: entry.label.clone(),
                    task: self.name.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn verbalizer(&self, label: &str) -> Result<&str> {
        self.verbalizers
            .get(label)
            .map(|s| s.as_str())
            .ok_or_else(|| Error::MissingVerbalizer {
                label: label.to_string(),
            })
    }
}

/// Draw `m` exemplars from the pool without replacement. Unbalanced mode is a
/// single seeded draw over the whole pool; balanced mode draws m/|labels| per
/// label (one shared generator, labels visited in task order) and interleaves
/// the draws by label order.
pub fn sample_exemplars(
    task: &TaskSpec,
    m: usize,
    seed: u64,
    balanced: bool,
) -> Result<Vec<Exemplar>> {
    if m == 0 {
        return Err(Error::InvalidInput("m must be at least 1".into()));
    }
    let pool = &task.exemplar_pool;
    if m > pool.len() {
        return Err(Error::ExemplarPoolTooSmall { m, pool: pool.len() });
    }
    let mut rng = SeededRng::new(seed);
    let take = |i: usize| Exemplar {
        pool_index: i,
        text: pool[i].text.clone(),
        label: pool[i].label.clone(),
    };
    if !balanced {
        return Ok(rng.sample_indices(pool.len(), m).into_iter().map(take).collect());
    }

    let n_labels = task.labels.len();
    if !m.is_multiple_of(n_labels) {
        return Err(Error::BalancedInfeasible(format!(
            "m={m} is not a multiple of {n_labels} labels"
        )));
    }
    let per_label = m / n_labels;
    let mut per_label_draws: Vec<Vec<usize>> = Vec::with_capacity(n_labels);
    for label in &task.labels {
        let indices: Vec<usize> = pool
            .iter()
            .enumerate()
            .filter(|(_, e)| &e.label == label)
            .map(|(i, _)| i)
            .collect();
        if indices.len() < per_label {
            return Err(Error::BalancedInfeasible(format!(
                "label {label:?} has {} pool entries, needs {per_label}",
                indices.len()
            )));
        }
        let picks = rng.sample_indices(indices.len(), per_label);
        per_label_draws.push(picks.into_iter().map(|p| indices[p]).collect());
    }
    let mut out = Vec::with_capacity(m);
    for round in 0..per_label {
        for draws in &per_label_draws {
            out.push(take(draws[round]));
        }
    }
    Ok(out)
}

fn render_exemplar_block(task: &TaskSpec, exemplar: &Exemplar) -> Result<String> {
    let verbalizer = task.verbalizer(&exemplar.label)?;
    Ok(format!(
        "{}\n{} {}.\n\n",
        task.description_template.replacen("{text}", &exemplar.text, 1),
        task.answer_cue,
        verbalizer
    ))
}

/// Render the few-shot prefix for the given exemplars.
pub fn render_prefix(task: &TaskSpec, exemplars: &[Exemplar], seed: u64) -> Result<PromptPrefix> {
    if exemplars.is_empty() {
        return Err(Error::InvalidInput("a prefix requires at least one exemplar".into()));
    }
    let mut text = String::new();
    for exemplar in exemplars {
        text.push_str(&render_exemplar_block(task, exemplar)?);
    }
    Ok(PromptPrefix {
        task: task.name.clone(),
        m: exemplars.len(),
        exemplar_ids: exemplars.iter().map(|e| e.pool_index).collect(),
        text,
        seed,
    })
}

/// Sample and render in one step.
pub fn build_prefix(task: &TaskSpec, m: usize, seed: u64, balanced: bool) -> Result<PromptPrefix> {
    let exemplars = sample_exemplars(task, m, seed, balanced)?;
    render_prefix(task, &exemplars, seed)
}

/// Render the unanswered prompt body for a query or a piece of evidence: it
/// ends at the answer cue plus a single space.
pub fn render_query_prompt(task: &TaskSpec, text: &str) -> Result<String> {
    if text.is_empty() {
        return Err(Error::InvalidInput("prompt text is empty".into()));
    }
    Ok(format!(
        "{}\n{} ",
        task.description_template.replacen("{text}", text, 1),
        task.answer_cue
    ))
}
