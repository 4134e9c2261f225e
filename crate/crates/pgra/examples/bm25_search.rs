//! Sparse stage-1 retrieval with Okapi BM25.
//!
//! Run: `cargo run -p pgra --example bm25_search`

use pgra::corpus::{Corpus, EvidenceRecord, Granularity};
use pgra::encoder::{Bm25Index, Bm25Params};

fn main() -> pgra::Result<()> {
    let docs = [
        "the recipe calls for ripe tomatoes and basil",
        "tomatoes grow best in full sun",
        "a basil plant on the windowsill",
        "the printer is out of toner again",
        "sun dried tomatoes in olive oil",
    ];
    let records = docs
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

    let index = Bm25Index::build(&corpus, Bm25Params::default())?;
    for query in ["tomatoes", "basil windowsill", "toner"] {
        println!("query {query:?}");
        for (id, score) in index.score_all(query).into_iter().take(3) {
            println!("  id {id} score {score:.4}  {:?}", corpus.get(id).unwrap().text);
        }
    }
    Ok(())
}
