//! The full two-stage flow in memory: dense recall, prompt-guided
//! reranking, majority-vote reading.
//!
//! Run: `cargo run -p pgra --example two_stage_pipeline`

use std::path::Path;

use pgra::corpus::{Corpus, EvidenceRecord, Granularity};
use pgra::encoder::EncoderConfig;
use pgra::index::DenseIndex;
use pgra::pipeline::{run_pipeline, PipelineConfig, Query, SearchBackend};
use pgra::prompts::TaskSpec;
use pgra::reader::{fill_pseudo_labels, fit_prototypes, vote};

fn main() -> pgra::Result<()> {
    let task_file = Path::new(env!("CARGO_MANIFEST_DIR")).join("tasks/sst2.json");
    let task = TaskSpec::from_file(&task_file)?;

    let sentences = [
        "an absolute delight from the first scene",
        "i wanted my two hours back",
        "the lead gives a luminous performance",
        "flat jokes and a tired premise",
        "a warm and generous little film",
        "the pacing drags and the ending lands with a thud",
        "gorgeous to look at and smarter than it needs to be",
        "a charmless retread of better movies",
        "the soundtrack alone is worth the ticket",
        "ninety minutes of missed opportunities",
    ];
    let records = sentences
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

    let encoder = EncoderConfig::reference(256);
    let index = DenseIndex::build_flat(&corpus, &encoder)?;

    let mut config = PipelineConfig::new(task.clone(), encoder.clone(), encoder.clone());
    config.k = 8;
    config.d = 4;
    config.m = 4;
    config.prompt_seed = 1;

    let queries = vec![
        Query {
            query_id: "q0".into(),
            text: "a delight of a film with a luminous lead".into(),
            label: Some("positive".into()),
        },
        Query {
            query_id: "q1".into(),
            text: "tired premise, charmless jokes".into(),
            label: Some("negative".into()),
        },
    ];
    let run = run_pipeline(&config, &SearchBackend::Dense(&index), &corpus, &queries, 2)?;
    assert!(run.failures.is_empty());

    let classifier = fit_prototypes(&task, &encoder)?;
    for mut outcome in run.outcomes {
        println!("query {:?}: {:?}", outcome.query.query_id, outcome.query.text);
        for item in &outcome.reranked {
            println!(
                "  stage2 #{} (stage1 #{}) score {:.3}  {:?}",
                item.stage2_rank, item.stage1_rank, item.stage2_score, item.evidence.text
            );
        }
        fill_pseudo_labels(&mut outcome.reranked, &classifier, &encoder)?;
        let prediction = vote(&task, &outcome.query.query_id, &outcome.reranked)?;
        println!(
            "  predicted {:?} (gold {:?}), votes {:?}",
            prediction.predicted_label, outcome.query.label, prediction.vote_counts
        );
    }
    Ok(())
}
