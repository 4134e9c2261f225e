//! Exporting query + evidence packs for an external trained reader.
//!
//! Run: `cargo run -p pgra --example export_reader_pack`

use std::path::Path;

use pgra::corpus::{Corpus, EvidenceRecord, Granularity};
use pgra::encoder::EncoderConfig;
use pgra::index::DenseIndex;
use pgra::pipeline::{run_pipeline, PipelineConfig, Query, SearchBackend};
use pgra::prompts::TaskSpec;
use pgra::reader::export_reader_pack;

fn main() -> pgra::Result<()> {
    let task_file = Path::new(env!("CARGO_MANIFEST_DIR")).join("tasks/sst2.json");
    let task = TaskSpec::from_file(&task_file)?;
    let encoder = EncoderConfig::reference(128);

    let texts = [
        "a sharp and funny road movie",
        "listless direction wastes a fine cast",
        "the animation bursts with invention",
        "two hours of joyless noise",
        "a tender portrait of a fading town",
        "the thriller never builds any tension",
    ];
    let records = texts
        .iter()
        .enumerate()
        .map(|(i, t)| EvidenceRecord {
            id: i as u64,
            text: t.to_string(),
            granularity: Granularity::Sentence,
            pseudo_label: None,
        })
        .collect();
    let corpus = Corpus::from_records(records, Granularity::Sentence)?;
    let index = DenseIndex::build_flat(&corpus, &encoder)?;

    let mut config = PipelineConfig::new(task.clone(), encoder.clone(), encoder.clone());
    config.k = 6;
    config.d = 2;
    config.m = 4;
    let queries = vec![
        Query {
            query_id: "q0".into(),
            text: "a funny, inventive movie".into(),
            label: Some("positive".into()),
        },
        Query {
            query_id: "q1".into(),
            text: "joyless and listless".into(),
            label: Some("negative".into()),
        },
    ];
    let run = run_pipeline(&config, &SearchBackend::Dense(&index), &corpus, &queries, 1)?;

    let reranked: Vec<_> = run
        .outcomes
        .iter()
        .map(|o| (o.query.query_id.clone(), o.reranked.clone()))
        .collect();
    let out = std::env::temp_dir().join("pgra-reader-pack.jsonl");
    export_reader_pack(&task, &queries, &reranked, &out)?;
    println!("wrote {}", out.display());
    for line in std::fs::read_to_string(&out).unwrap().lines() {
        println!("  {line}");
    }
    Ok(())
}
