//! Sweeping the stage-1 and stage-2 depths over a grid.
//!
//! Run: `cargo run -p pgra --example sweep_depths`

use std::path::Path;

use pgra::corpus::{Corpus, EvidenceRecord, Granularity};
use pgra::encoder::EncoderConfig;
use pgra::eval::{sweep, sweep_csv};
use pgra::index::DenseIndex;
use pgra::pipeline::{PipelineConfig, Query, SearchBackend};
use pgra::prompts::TaskSpec;
use pgra::reader::{fit_prototypes, pseudo_label};

fn main() -> pgra::Result<()> {
    let task_file = Path::new(env!("CARGO_MANIFEST_DIR")).join("tasks/sst2.json");
    let task = TaskSpec::from_file(&task_file)?;
    let encoder = EncoderConfig::reference(128);

    let texts: Vec<String> = (0..40)
        .map(|i| {
            format!(
                "{} story about token{}",
                if i % 2 == 0 { "a warm funny" } else { "a dull lazy" },
                i % 8
            )
        })
        .collect();

    // the sweep's vote reader needs pseudo-labels on the corpus up front
    let classifier = fit_prototypes(&task, &encoder)?;
    let labels = pseudo_label(&classifier, &encoder, &texts)?;
    let records = texts
        .iter()
        .zip(labels)
        .enumerate()
        .map(|(i, (t, label))| EvidenceRecord {
            id: i as u64,
            text: t.clone(),
            granularity: Granularity::Sentence,
            pseudo_label: Some(label),
        })
        .collect();
    let corpus = Corpus::from_records(records, Granularity::Sentence)?;
    let index = DenseIndex::build_flat(&corpus, &encoder)?;

    let mut config = PipelineConfig::new(task, encoder.clone(), encoder.clone());
    config.m = 4;
    let queries: Vec<Query> = (0..8)
        .map(|i| Query {
            query_id: format!("q{i}"),
            text: if i % 2 == 0 {
                format!("a warm funny tale token{i}")
            } else {
                format!("a dull lazy tale token{i}")
            },
            label: Some(if i % 2 == 0 { "positive" } else { "negative" }.into()),
        })
        .collect();

    let cells = sweep(
        &config,
        &SearchBackend::Dense(&index),
        &corpus,
        &queries,
        &[8, 16, 32],
        &[4, 8],
        2,
    );
    print!("{}", sweep_csv(&cells));
    Ok(())
}
