//! Sweep semantics: grid cells equal standalone runs, repeated points agree,
//! and a corpus whose decisive evidence sits past stage-1 rank 16 makes the
//! metric non-decreasing in k.

mod common;

use std::collections::BTreeMap;

use pgra::corpus::{Corpus, EvidenceRecord, Granularity};
use pgra::encoder::EncoderConfig;
use pgra::eval::{sweep, sweep_csv};
use pgra::index::DenseIndex;
use pgra::pipeline::{PipelineConfig, Query, SearchBackend};
use pgra::prompts::{Metric, PoolEntry, TaskSpec};
use pgra::reader::pseudo_label;

fn marker_task() -> TaskSpec {
    TaskSpec {
        name: "markers".into(),
        description_template: "Opinion:\n{text}".into(),
        answer_cue: "The answer is".into(),
        labels: vec!["negative".into(), "positive".into()],
        verbalizers: BTreeMap::from([
            ("negative".into(), "bad".into()),
            ("positive".into(), "good".into()),
        ]),
        metric: Metric::Accuracy,
        exemplar_pool: vec![
            PoolEntry { text: "gloom".into(), label: "negative".into() },
            PoolEntry { text: "uplift".into(), label: "positive".into() },
        ],
    }
}

/// Long topic-heavy distractors occupy stage-1 ranks 1..20; the four short
/// consistent records sit at ranks 21..24, reachable with k=50 but not k=16.
fn rank_gap_corpus(task: &TaskSpec, encoder: &EncoderConfig) -> (Corpus, Vec<Query>) {
    let mut texts: Vec<String> = Vec::new();
    for _ in 0..20 {
        let mut words = vec!["alpha"; 8];
        words.push("gloom");
        words.push("bad");
        texts.push(words.join(" "));
    }
    for _ in 0..4 {
        texts.push("alpha uplift good".to_string());
    }
    for _ in 0..30 {
        texts.push("alpha calm calm".to_string());
    }
    let mut records: Vec<EvidenceRecord> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| EvidenceRecord {
            id: i as u64,
            text: t.clone(),
            granularity: Granularity::Sentence,
            pseudo_label: None,
        })
        .collect();

    // pseudo-labels attached up front, as the sweep requires
    let classifier = pgra::reader::fit_prototypes(task, encoder).unwrap();
    let all: Vec<String> = records.iter().map(|r| r.text.clone()).collect();
    let labels = pseudo_label(&classifier, encoder, &all).unwrap();
    for (record, label) in records.iter_mut().zip(labels) {
        record.pseudo_label = Some(label);
    }
    let corpus = Corpus::from_records(records, Granularity::Sentence).unwrap();

    let queries = (0..6)
        .map(|i| Query {
            query_id: format!("q{i}"),
            text: "alpha alpha really".into(),
            label: Some("positive".into()),
        })
        .collect();
    (corpus, queries)
}

fn base_config(task: TaskSpec, encoder: &EncoderConfig) -> PipelineConfig {
    let mut config = PipelineConfig::new(task, encoder.clone(), encoder.clone());
    config.m = 2;
    config.prompt_seed = 3;
    config
}

#[test]
fn metric_is_non_decreasing_in_k_on_the_rank_gap_corpus() {
    let task = marker_task();
    let encoder = EncoderConfig::reference(256);
    let (corpus, queries) = rank_gap_corpus(&task, &encoder);
    let index = DenseIndex::build_flat(&corpus, &encoder).unwrap();
    let config = base_config(task, &encoder);

    let cells = sweep(
        &config,
        &SearchBackend::Dense(&index),
        &corpus,
        &queries,
        &[16, 50],
        &[4],
        2,
    );
    assert_eq!(cells.len(), 2);
    let at_16 = cells[0].value.expect("k=16 cell must succeed");
    let at_50 = cells[1].value.expect("k=50 cell must succeed");
    // k=16 sees only the distractors and votes wrong; k=50 reaches the
    // consistent evidence, which the reranker lifts into the top-4
    assert_eq!(at_16, 0.0);
    assert_eq!(at_50, 1.0);
    assert!(at_50 >= at_16);
}

#[test]
fn sweep_cell_equals_standalone_run_and_duplicates_agree() {
    let task = marker_task();
    let encoder = EncoderConfig::reference(256);
    let (corpus, queries) = rank_gap_corpus(&task, &encoder);
    let index = DenseIndex::build_flat(&corpus, &encoder).unwrap();
    let config = base_config(task, &encoder);

    let cells = sweep(
        &config,
        &SearchBackend::Dense(&index),
        &corpus,
        &queries,
        &[50, 50],
        &[4, 4],
        1,
    );
    assert_eq!(cells.len(), 4);
    let values: Vec<f64> = cells.iter().map(|c| c.value.unwrap()).collect();
    assert!(values.windows(2).all(|w| w[0] == w[1]), "{values:?}");

    // a standalone single-point sweep agrees with the grid cell
    let single = sweep(
        &config,
        &SearchBackend::Dense(&index),
        &corpus,
        &queries,
        &[50],
        &[4],
        1,
    );
    assert_eq!(single[0].value, cells[0].value);
}

#[test]
fn infeasible_cells_fail_without_stopping_the_sweep() {
    let task = marker_task();
    let encoder = EncoderConfig::reference(256);
    let (corpus, queries) = rank_gap_corpus(&task, &encoder);
    let index = DenseIndex::build_flat(&corpus, &encoder).unwrap();
    let config = base_config(task, &encoder);

    let cells = sweep(
        &config,
        &SearchBackend::Dense(&index),
        &corpus,
        &queries,
        &[8],
        &[4, 16],
        1,
    );
    assert_eq!(cells.len(), 2);
    assert!(cells[0].value.is_some());
    assert!(cells[1].value.is_none(), "d=16 > k=8 must fail");
    assert!(cells[1].error.as_deref().unwrap_or("").contains("exceed"));

    let csv = sweep_csv(&cells);
    assert!(csv.lines().count() == 3);
    assert!(csv.ends_with("8,16,accuracy,\n"), "{csv}");
}
