//! Desk-scale reader: prototype pseudo-labeling, majority voting, and the
//! export format consumed by external trained readers.
//!
//! The prototype classifier stands in for a fine-tuned pseudo-labeler: one
//! L2-normalized mean embedding per label, argmax by inner product. The vote
//! reader predicts the plurality pseudo-label of the selected evidence.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{encode_batch, EmbeddingVector, EncoderConfig};
use crate::error::{Error, Result};
use crate::pipeline::{Query, RerankedEvidence};
use crate::prompts::TaskSpec;

/// Label prediction for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub query_id: String,
    pub predicted_label: Option<String>,
    pub vote_counts: BTreeMap<String, u64>,
    pub abstained: bool,
}

/// One mean-embedding prototype per label, in task label order.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeClassifier {
    pub task: String,
    labels: Vec<String>,
    prototypes: Vec<EmbeddingVector>,
}

impl PrototypeClassifier {
    pub fn dim(&self) -> usize {
        self.prototypes[0].dim()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn prototype(&self, label: &str) -> Option<&EmbeddingVector> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| &self.prototypes[i])
    }
}

/// Fit one prototype per label: the L2-normalized mean of the encoded
/// exemplar texts carrying that label.
pub fn fit_prototypes(task: &TaskSpec, encoder: &EncoderConfig) -> Result<PrototypeClassifier> {
    task.validate()?;
    let mut prototypes = Vec::with_capacity(task.labels.len());
    for label in &task.labels {
        let texts: Vec<String> = task
            .exemplar_pool
            .iter()
            .filter(|e| &e.label == label)
            .map(|e| e.text.clone())
            .collect();
        if texts.is_empty() {
            return Err(Error::InvalidInput(format!(
                "label {label:?} has no exemplars to fit a prototype"
            )));
        }
        let encoded = encode_batch(encoder, &texts)?;
        let mut mean = vec![0.0f32; encoder.dim];
        for vector in &encoded {
            for (slot, v) in mean.iter_mut().zip(vector.values()) {
                *slot += v / texts.len() as f32;
            }
        }
        prototypes.push(EmbeddingVector::new(mean)?.normalized());
    }
    Ok(PrototypeClassifier {
        task: task.name.clone(),
        labels: task.labels.clone(),
        prototypes,
    })
}

/// Classify texts by argmax prototype inner product; exact ties resolve to
/// the earlier label in task order.
pub fn pseudo_label(
    classifier: &PrototypeClassifier,
    encoder: &EncoderConfig,
    texts: &[String],
) -> Result<Vec<String>> {
    if classifier.dim() != encoder.dim {
        return Err(Error::DimMismatch {
            context: "prototype classifier vs encoder".into(),
            expected: classifier.dim(),
            actual: encoder.dim,
        });
    }
    let encoded = encode_batch(encoder, texts)?;
    Ok(encoded
        .iter()
        .map(|vector| {
            let mut best = 0usize;
            let mut best_ip = f32::NEG_INFINITY;
            for (i, prototype) in classifier.prototypes.iter().enumerate() {
                let ip = prototype.dot(vector);
                if ip > best_ip {
                    best_ip = ip;
                    best = i;
                }
            }
            classifier.labels[best].clone()
        })
        .collect())
}

/// Fill in missing pseudo-labels on reranked evidence using the classifier.
/// Labels already present (for instance from a sidecar file) take precedence.
pub fn fill_pseudo_labels(
    items: &mut [RerankedEvidence],
    classifier: &PrototypeClassifier,
    encoder: &EncoderConfig,
) -> Result<()> {
    let missing: Vec<usize> = items
        .iter()
        .enumerate()
        .filter(|(_, r)| r.evidence.pseudo_label.is_none())
        .map(|(i, _)| i)
        .collect();
    if missing.is_empty() {
        return Ok(());
    }
    let texts: Vec<String> = missing
        .iter()
        .map(|&i| items[i].evidence.text.clone())
        .collect();
    let labels = pseudo_label(classifier, encoder, &texts)?;
    for (&i, label) in missing.iter().zip(labels) {
        items[i].evidence.pseudo_label = Some(label);
    }
    Ok(())
}

/// Plurality vote over the pseudo-labels of the selected evidence. Count ties
/// break by higher summed stage-2 score, then by task label order. Only an
/// empty evidence list abstains.
pub fn vote(task: &TaskSpec, query_id: &str, reranked: &[RerankedEvidence]) -> Result<Prediction> {
    if reranked.is_empty() {
        return Ok(Prediction {
            query_id: query_id.to_string(),
            predicted_label: None,
            vote_counts: BTreeMap::new(),
            abstained: true,
        });
    }
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut score_sums: BTreeMap<String, f64> = BTreeMap::new();
    for item in reranked {
        let label = item
            .evidence
            .pseudo_label
            .as_ref()
            .ok_or(Error::MissingPseudoLabel {
                id: item.evidence.id,
            })?;
        if !task.labels.contains(label) {
            return Err(Error::UnknownLabel {
                label: label.clone(),
                task: task.name.clone(),
            });
        }
        *counts.entry(label.clone()).or_insert(0) += 1;
        *score_sums.entry(label.clone()).or_insert(0.0) += item.stage2_score;
    }
    // Walk labels in task order, replacing only on a strict improvement, so
    // full ties land on the earliest label.
    let mut winner: Option<&String> = None;
    for label in task.labels.iter().filter(|l| counts.contains_key(*l)) {
        match winner {
            None => winner = Some(label),
            Some(current) => {
                let ordering = counts[label].cmp(&counts[current]).then(
                    score_sums[label]
                        .partial_cmp(&score_sums[current])
                        .unwrap_or(std::cmp::Ordering::Equal),
                );
                if ordering == std::cmp::Ordering::Greater {
                    winner = Some(label);
                }
            }
        }
    }
    let winner = winner
        .expect("non-empty evidence implies at least one label")
        .clone();
    Ok(Prediction {
        query_id: query_id.to_string(),
        predicted_label: Some(winner),
        vote_counts: counts,
        abstained: false,
    })
}

/// One line of the reader-pack export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaderPackLine {
    #[serde(deserialize_with = "crate::pipeline::deser_query_id")]
    pub query_id: String,
    pub input: String,
    pub evidence: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Export `{query_id, input, evidence[, label]}` JSONL for an external
/// trained reader. Evidence texts appear in stage-2 rank order; a query's
/// gold label is included when known.
pub fn export_reader_pack(
    task: &TaskSpec,
    queries: &[Query],
    reranked: &[(String, Vec<RerankedEvidence>)],
    path: &Path,
) -> Result<()> {
    let by_id: std::collections::HashMap<&str, &Vec<RerankedEvidence>> = reranked
        .iter()
        .map(|(id, items)| (id.as_str(), items))
        .collect();
    let mut lines = Vec::with_capacity(queries.len());
    for query in queries {
        let items = by_id
            .get(query.query_id.as_str())
            .ok_or_else(|| Error::MissingQueryData {
                query_id: query.query_id.clone(),
                what: "reranked evidence".into(),
            })?;
        if let Some(label) = &query.label {
            if !task.labels.contains(label) {
                return Err(Error::UnknownLabel {
                    label: label.clone(),
                    task: task.name.clone(),
                });
            }
        }
        let mut sorted: Vec<&RerankedEvidence> = items.iter().collect();
        sorted.sort_by_key(|r| r.stage2_rank);
        lines.push(ReaderPackLine {
            query_id: query.query_id.clone(),
            input: query.text.clone(),
            evidence: sorted.iter().map(|r| r.evidence.text.clone()).collect(),
            label: query.label.clone(),
        });
    }
    crate::util::write_jsonl(path, &lines)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EvidenceRecord, Granularity};
    use crate::prompts::{Metric, PoolEntry};

    fn marker_task() -> TaskSpec {
        TaskSpec {
            name: "marker".into(),
            description_template: "Opinion:\n{text}".into(),
            answer_cue: "The answer is".into(),
            labels: vec!["negative".into(), "positive".into()],
            verbalizers: BTreeMap::from([
                ("negative".into(), "negative".into()),
                ("positive".into(), "positive".into()),
            ]),
            metric: Metric::Accuracy,
            exemplar_pool: vec![
                PoolEntry { text: "gloom".into(), label: "negative".into() },
                PoolEntry { text: "uplift".into(), label: "positive".into() },
            ],
        }
    }

    fn evidence(id: u64, text: &str, label: Option<&str>, score: f64, rank: usize) -> RerankedEvidence {
        RerankedEvidence {
            evidence: EvidenceRecord {
                id,
                text: text.to_string(),
                granularity: Granularity::Sentence,
                pseudo_label: label.map(|l| l.to_string()),
            },
            stage2_inner_product: score,
            stage2_score: score,
            stage2_rank: rank,
            stage1_rank: rank,
        }
    }

    #[test]
    fn single_exemplar_prototype_is_its_embedding() {
        let task = marker_task();
        let encoder = EncoderConfig::reference(64);
        let classifier = fit_prototypes(&task, &encoder).unwrap();
        let direct = encode_batch(&encoder, &["uplift".to_string()]).unwrap();
        assert_eq!(
            classifier.prototype("positive").unwrap().values(),
            direct[0].values()
        );
    }

    #[test]
    fn duplicate_exemplars_do_not_move_the_prototype() {
        let mut task = marker_task();
        task.exemplar_pool.push(PoolEntry { text: "uplift".into(), label: "positive".into() });
        let encoder = EncoderConfig::reference(64);
        let one = fit_prototypes(&marker_task(), &encoder).unwrap();
        let two = fit_prototypes(&task, &encoder).unwrap();
        let a = one.prototype("positive").unwrap();
        let b = two.prototype("positive").unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn missing_label_exemplars_error() {
        let mut task = marker_task();
        task.exemplar_pool.retain(|e| e.label != "negative");
        let encoder = EncoderConfig::reference(64);
        assert!(fit_prototypes(&task, &encoder).is_err());
    }

    #[test]
    fn pseudo_label_recovers_exemplar_label() {
        let task = marker_task();
        let encoder = EncoderConfig::reference(64);
        let classifier = fit_prototypes(&task, &encoder).unwrap();
        let labels = pseudo_label(&classifier, &encoder, &["uplift".to_string()]).unwrap();
        assert_eq!(labels, vec!["positive"]);
    }

    #[test]
    fn orthogonal_markers_label_held_out_texts() {
        let task = marker_task();
        let encoder = EncoderConfig::reference(256);
        let classifier = fit_prototypes(&task, &encoder).unwrap();
        let labels = pseudo_label(
            &classifier,
            &encoder,
            &[
                "totally uplift weather".to_string(),
                "gloom gloom everywhere".to_string(),
            ],
        )
        .unwrap();
        assert_eq!(labels, vec!["positive", "negative"]);
    }

    #[test]
    fn zero_vector_takes_first_label() {
        let task = marker_task();
        let encoder = EncoderConfig::reference(64);
        let classifier = fit_prototypes(&task, &encoder).unwrap();
        // a text sharing no token with either prototype gives inner product 0
        // for both: the tie resolves to the first label in task order
        let labels = pseudo_label(&classifier, &encoder, &["unrelated".to_string()]).unwrap();
        assert_eq!(labels, vec!["negative"]);
    }

    #[test]
    fn batch_matches_one_at_a_time() {
        let task = marker_task();
        let encoder = EncoderConfig::reference(128);
        let classifier = fit_prototypes(&task, &encoder).unwrap();
        let texts: Vec<String> = ["uplift day", "gloom night", "nothing here"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let batch = pseudo_label(&classifier, &encoder, &texts).unwrap();
        for (i, text) in texts.iter().enumerate() {
            let single = pseudo_label(&classifier, &encoder, std::slice::from_ref(text)).unwrap();
            assert_eq!(batch[i], single[0]);
        }
    }

    #[test]
    fn dim_mismatch_rejected() {
        let task = marker_task();
        let classifier = fit_prototypes(&task, &EncoderConfig::reference(64)).unwrap();
        let other = EncoderConfig::reference(32);
        assert!(pseudo_label(&classifier, &other, &["x".to_string()]).is_err());
    }

    #[test]
    fn vote_plurality_five_to_three() {
        let task = marker_task();
        let items: Vec<RerankedEvidence> = (0..8)
            .map(|i| {
                let label = if i < 5 { "positive" } else { "negative" };
                evidence(i, "t", Some(label), 0.125, i as usize + 1)
            })
            .collect();
        let prediction = vote(&task, "q", &items).unwrap();
        assert_eq!(prediction.predicted_label.as_deref(), Some("positive"));
        assert_eq!(prediction.vote_counts["positive"], 5);
        assert_eq!(prediction.vote_counts["negative"], 3);
        assert!(!prediction.abstained);
    }

    #[test]
    fn vote_empty_abstains() {
        let task = marker_task();
        let prediction = vote(&task, "q", &[]).unwrap();
        assert!(prediction.abstained);
        assert_eq!(prediction.predicted_label, None);
    }

    #[test]
    fn vote_tie_breaks_by_summed_score() {
        let task = marker_task();
        // 4-4 count tie; positive evidence carries higher total stage-2 score
        let mut items = Vec::new();
        for i in 0..4 {
            items.push(evidence(i, "t", Some("positive"), 0.2, i as usize + 1));
        }
        for i in 4..8 {
            items.push(evidence(i, "t", Some("negative"), 0.05, i as usize + 1));
        }
        let prediction = vote(&task, "q", &items).unwrap();
        assert_eq!(prediction.predicted_label.as_deref(), Some("positive"));
    }

    #[test]
    fn vote_full_tie_takes_first_label_in_task_order() {
        let task = marker_task();
        let items = vec![
            evidence(0, "t", Some("positive"), 0.5, 1),
            evidence(1, "t", Some("negative"), 0.5, 2),
        ];
        let prediction = vote(&task, "q", &items).unwrap();
        assert_eq!(prediction.predicted_label.as_deref(), Some("negative"));
    }

    #[test]
    fn vote_missing_pseudo_label_names_the_id() {
        let task = marker_task();
        let items = vec![evidence(42, "t", None, 1.0, 1)];
        let err = vote(&task, "q", &items).unwrap_err();
        assert!(matches!(err, Error::MissingPseudoLabel { id: 42 }));
    }

    #[test]
    fn vote_is_permutation_invariant_on_equal_scores() {
        let task = marker_task();
        let mut items = vec![
            evidence(0, "t", Some("positive"), 0.25, 1),
            evidence(1, "t", Some("positive"), 0.25, 2),
            evidence(2, "t", Some("negative"), 0.25, 3),
            evidence(3, "t", Some("negative"), 0.25, 4),
        ];
        let a = vote(&task, "q", &items).unwrap();
        items.reverse();
        let b = vote(&task, "q", &items).unwrap();
        assert_eq!(a.predicted_label, b.predicted_label);
    }

    #[test]
    fn export_shapes_and_round_trips() {
        let task = marker_task();
        let queries = vec![Query {
            query_id: "q0".into(),
            text: "the input".into(),
            label: Some("positive".into()),
        }];
        let reranked = vec![(
            "q0".to_string(),
            vec![
                evidence(1, "second", Some("positive"), 0.4, 2),
                evidence(0, "first", Some("positive"), 0.6, 1),
            ],
        )];
        let file = tempfile::NamedTempFile::new().unwrap();
        export_reader_pack(&task, &queries, &reranked, file.path()).unwrap();
        let lines: Vec<ReaderPackLine> = crate::util::read_jsonl(file.path()).unwrap();
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].query_id, "q0");
        assert_eq!(lines[0].input, "the input");
        // evidence ordered by stage-2 rank, not input order
        assert_eq!(lines[0].evidence, vec!["first".to_string(), "second".to_string()]);
        assert_eq!(lines[0].label.as_deref(), Some("positive"));
    }

    #[test]
    fn export_missing_query_errors() {
        let task = marker_task();
        let queries = vec![Query { query_id: "q0".into(), text: "t".into(), label: None }];
        let file = tempfile::NamedTempFile::new().unwrap();
        let err = export_reader_pack(&task, &queries, &[], file.path()).unwrap_err();
        assert!(matches!(err, Error::MissingQueryData { .. }));
    }

    #[test]
    fn fill_pseudo_labels_respects_existing() {
        let task = marker_task();
        let encoder = EncoderConfig::reference(64);
        let classifier = fit_prototypes(&task, &encoder).unwrap();
        let mut items = vec![
            evidence(0, "uplift joy", None, 0.5, 1),
            evidence(1, "uplift joy", Some("negative"), 0.5, 2),
        ];
        fill_pseudo_labels(&mut items, &classifier, &encoder).unwrap();
        assert_eq!(items[0].evidence.pseudo_label.as_deref(), Some("positive"));
        // sidecar-style label untouched
        assert_eq!(items[1].evidence.pseudo_label.as_deref(), Some("negative"));
    }
}
