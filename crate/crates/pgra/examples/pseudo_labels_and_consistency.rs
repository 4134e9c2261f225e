//! Prototype pseudo-labeling and the label-consistency report.
//!
//! Run: `cargo run -p pgra --example pseudo_labels_and_consistency`

use std::collections::HashMap;
use std::path::Path;

use pgra::corpus::{Corpus, EvidenceRecord, Granularity};
use pgra::encoder::EncoderConfig;
use pgra::eval::{consistency_report, consistency_score};
use pgra::index::DenseIndex;
use pgra::pipeline::{run_pipeline, PipelineConfig, Query, SearchBackend};
use pgra::prompts::TaskSpec;
use pgra::reader::{fill_pseudo_labels, fit_prototypes, pseudo_label, vote};

fn main() -> pgra::Result<()> {
    let task_file = Path::new(env!("CARGO_MANIFEST_DIR")).join("tasks/sst2.json");
    let task = TaskSpec::from_file(&task_file)?;
    let encoder = EncoderConfig::reference(256);

    // prototypes: one normalized mean embedding per label
    let classifier = fit_prototypes(&task, &encoder)?;
    let sample = vec![
        "a joyous , witty film".to_string(),
        "dull , lazy and predictable".to_string(),
    ];
    let labels = pseudo_label(&classifier, &encoder, &sample)?;
    println!("pseudo-labels: {:?} -> {:?}", sample, labels);

    // the worked arithmetic: 5 consistent of 8 is 62.5%
    let evidence_labels: Vec<String> = ["positive"; 5]
        .iter()
        .chain(["negative"; 3].iter())
        .map(|s| s.to_string())
        .collect();
    println!(
        "consistency score for 5/8: {}",
        consistency_score(&evidence_labels, "positive")?
    );

    // a small end-to-end run feeding the bucket report
    let texts: Vec<String> = (0..30)
        .map(|i| {
            format!(
                "{} movie with token{}",
                if i % 2 == 0 { "a joyous warm" } else { "a dull lazy" },
                i % 6
            )
        })
        .collect();
    let records = texts
        .iter()
        .enumerate()
        .map(|(i, t)| EvidenceRecord {
            id: i as u64,
            text: t.clone(),
            granularity: Granularity::Sentence,
            pseudo_label: None,
        })
        .collect();
    let corpus = Corpus::from_records(records, Granularity::Sentence)?;
    let index = DenseIndex::build_flat(&corpus, &encoder)?;
    let mut config = PipelineConfig::new(task.clone(), encoder.clone(), encoder.clone());
    config.k = 12;
    config.d = 6;
    config.m = 4;

    let queries: Vec<Query> = (0..10)
        .map(|i| Query {
            query_id: format!("q{i}"),
            text: if i % 2 == 0 {
                "a joyous movie".into()
            } else {
                "a dull movie".into()
            },
            label: Some(if i % 2 == 0 { "positive" } else { "negative" }.into()),
        })
        .collect();
    let run = run_pipeline(&config, &SearchBackend::Dense(&index), &corpus, &queries, 2)?;

    let corpus_texts: Vec<String> = corpus.records().iter().map(|r| r.text.clone()).collect();
    let corpus_labels = pseudo_label(&classifier, &encoder, &corpus_texts)?;
    let pseudo: HashMap<u64, String> = corpus
        .records()
        .iter()
        .zip(corpus_labels)
        .map(|(r, l)| (r.id, l))
        .collect();

    let mut golds = HashMap::new();
    let mut predictions = HashMap::new();
    let mut outcomes = run.outcomes;
    for outcome in &mut outcomes {
        fill_pseudo_labels(&mut outcome.reranked, &classifier, &encoder)?;
        let prediction = vote(&task, &outcome.query.query_id, &outcome.reranked)?;
        golds.insert(outcome.query.query_id.clone(), outcome.query.label.clone().unwrap());
        predictions.insert(outcome.query.query_id.clone(), prediction.predicted_label.unwrap());
    }
    let results: Vec<_> = outcomes
        .iter()
        .map(|o| pgra::pipeline::QueryResult::from_outcome(o, config.prompt_seed))
        .collect();
    let report = consistency_report(&results, &pseudo, &golds, &predictions, config.d)?;
    println!("mean consistency score: {:.3}", report.mean_consistency_score);
    for bucket in report.buckets.iter().filter(|b| b.n_instances > 0) {
        println!(
            "  {} consistent: {} instances, accuracy {:?}",
            bucket.consistent, bucket.n_instances, bucket.accuracy
        );
    }
    Ok(())
}
