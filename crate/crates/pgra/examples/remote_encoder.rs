//! The remote encoder protocol, exercised against the bundled stub service.
//! Point `EncoderConfig::remote` at a real embedding service speaking the
//! same `/embed` contract to swap in an actual model.
//!
//! Run: `cargo run -p pgra --example remote_encoder`

use pgra::encoder::stub::{StubBehavior, StubServer};
use pgra::encoder::{encode_batch, encode_prompted_batch, EncoderConfig, Pooling};

fn main() -> pgra::Result<()> {
    // a stub service implementing POST /embed on an ephemeral port
    let dim = 64;
    let server = StubServer::spawn(StubBehavior::Hash { dim }, 2).expect("bind stub");
    println!("stub encoder listening at {}", server.endpoint());

    let mut config = EncoderConfig::remote(server.endpoint(), dim);
    config.pooling = Pooling::Mean;
    config.batch_size = 8;

    let texts = vec![
        "the harbor at dusk".to_string(),
        "a stack of fresh rye".to_string(),
    ];
    let raw = encode_batch(&config, &texts)?;
    println!("raw mode returned {} vectors of dim {}", raw.len(), raw[0].dim());

    let mut prompted_config = config.clone();
    prompted_config.pooling = Pooling::LastToken;
    let prompted = encode_prompted_batch(&prompted_config, "Opinion:\n", &texts)?;
    println!(
        "prompted mode returned {} vectors, first norm {:.3}",
        prompted.len(),
        prompted[0].l2_norm()
    );

    server.join();

    // the same calls fall back to transport errors when nothing listens
    let dead = EncoderConfig::remote("http://127.0.0.1:1", dim);
    match encode_batch(&dead, &texts) {
        Err(e) => println!("unreachable endpoint surfaces as: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
