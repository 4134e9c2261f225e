//! Corpus ingestion: JSONL and plaintext inputs, stable ids, pseudo-label
//! sidecars.
//!
//! Run: `cargo run -p pgra --example ingest_corpus`

use pgra::corpus::{attach_pseudo_labels, ingest_jsonl, ingest_plaintext, Granularity};

fn main() -> pgra::Result<()> {
    let dir = std::env::temp_dir().join("pgra-ingest-example");
    std::fs::create_dir_all(&dir).unwrap();

    // one JSON object per line; ids are optional and assigned from 0
    let corpus_path = dir.join("corpus.jsonl");
    std::fs::write(
        &corpus_path,
        concat!(
            "{\"text\":\"the coffee at this place is outstanding\"}\n",
            "{\"text\":\"my package arrived crushed and late\"}\n",
            "\n",
            "{\"id\":10,\"text\":\"battery life is excellent\"}\n",
        ),
    )
    .unwrap();
    let (corpus, stats) = ingest_jsonl(&corpus_path, Granularity::Sentence)?;
    println!(
        "ingested {} records, skipped {} blank lines",
        corpus.len(),
        stats.skipped_blank_lines
    );
    for record in corpus.records() {
        println!("  id {} -> {:?}", record.id, record.text);
    }

    // plaintext: one evidence unit per line
    let plain_path = dir.join("corpus.txt");
    std::fs::write(&plain_path, "a bright morning\nan endless queue\n").unwrap();
    let (plain, _) = ingest_plaintext(&plain_path)?;
    println!("plaintext corpus holds {} records", plain.len());

    // pseudo-labels arrive as a sidecar file
    let labels_path = dir.join("labels.jsonl");
    std::fs::write(
        &labels_path,
        "{\"id\":0,\"label\":\"positive\"}\n{\"id\":1,\"label\":\"negative\"}\n",
    )
    .unwrap();
    let (labeled, warnings) = attach_pseudo_labels(corpus, &labels_path, None)?;
    assert!(warnings.is_empty());
    println!(
        "record 0 now carries pseudo-label {:?}",
        labeled.get(0).unwrap().pseudo_label
    );

    // round trip: serialization reproduces the corpus exactly
    let out_path = dir.join("normalized.jsonl");
    labeled.write_jsonl(&out_path)?;
    let (again, _) = ingest_jsonl(&out_path, Granularity::Sentence)?;
    assert_eq!(again.len(), labeled.len());
    println!("serialized corpus round-trips to {} records", again.len());
    Ok(())
}
