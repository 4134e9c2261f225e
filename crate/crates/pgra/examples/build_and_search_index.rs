//! Dense index lifecycle: build flat, search exactly, cluster for
//! approximate search, persist and reload bit-exact.
//!
//! Run: `cargo run -p pgra --example build_and_search_index`

use pgra::corpus::{Corpus, EvidenceRecord, Granularity};
use pgra::encoder::{encode_batch, EncoderConfig};
use pgra::index::DenseIndex;

fn main() -> pgra::Result<()> {
    let sentences = [
        "a quiet walk along the harbor",
        "the engine refused to start in the cold",
        "fresh bread from the corner bakery",
        "the harbor lights flicker at dusk",
        "sourdough and rye stacked on the counter",
        "a mechanic listens to the engine idle",
        "gulls circle the fishing boats in the harbor",
        "the bakery opens before sunrise",
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

    let encoder = EncoderConfig::reference(128);
    let index = DenseIndex::build_flat(&corpus, &encoder)?;
    println!("flat index: {} rows, dim {}", index.count(), index.dim());

    let query = encode_batch(&encoder, &["boats in the harbor".to_string()])?.remove(0);
    for hit in index.search(&query, 3, None)? {
        println!(
            "  #{} id {} ip {:.4}  {:?}",
            hit.rank,
            hit.id,
            hit.inner_product,
            corpus.get(hit.id).unwrap().text
        );
    }

    // clustered variant: probe a subset of centroids
    let clustered = index.clone().into_clustered(3, 0)?;
    let approx = clustered.search(&query, 3, Some(1))?;
    println!(
        "clustered (nprobe=1) top hit: id {} ip {:.4}",
        approx[0].id, approx[0].inner_product
    );

    // persistence is bit-exact
    let path = std::env::temp_dir().join("pgra-example.idx");
    clustered.save(&path)?;
    let loaded = DenseIndex::load(&path)?;
    assert_eq!(clustered, loaded);
    println!("saved and reloaded {} bytes", std::fs::metadata(&path).unwrap().len());
    Ok(())
}
