//! HTTP client for the remote encoder protocol.
//!
//! `POST {endpoint}/embed` with a JSON body; the response must carry exactly
//! one vector per input text at the configured dimension. Requests go out in
//! `batch_size` chunks, one in flight at a time, so ordering within a call is
//! preserved regardless of service-side behavior. Transport failures retry a
//! couple of times with a fixed backoff before surfacing.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbeddingVector, EncoderConfig};
use crate::error::{Error, Result};

const ATTEMPTS: u32 = 3;
const RETRY_BACKOFF_MS: u64 = 50;

pub(super) enum Mode<'a> {
    Raw,
    Prompted(&'a str),
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    mode: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    prefix: Option<&'a str>,
    texts: &'a [String],
    pooling: &'static str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    dim: usize,
    vectors: Vec<Vec<f32>>,
}

pub(super) fn encode(
    config: &EncoderConfig,
    mode: Mode<'_>,
    texts: &[String],
) -> Result<Vec<EmbeddingVector>> {
    let endpoint = config.endpoint.as_deref().expect("validated");
    let url = format!("{}/embed", endpoint.trim_end_matches('/'));
    let agent = ureq::AgentBuilder::new()
        .timeout(Duration::from_millis(config.timeout_ms))
        .build();
    let (mode_str, prefix) = match mode {
        Mode::Raw => ("raw", None),
        Mode::Prompted(prefix) => ("prompted", Some(prefix)),
    };

    let mut out = Vec::with_capacity(texts.len());
    for (batch_index, chunk) in texts.chunks(config.batch_size).enumerate() {
        let request = EmbedRequest {
            mode: mode_str,
            prefix,
            texts: chunk,
            pooling: config.pooling.as_str(),
        };
        let response = post_with_retry(&agent, &url, endpoint, batch_index, &request)?;
        if response.dim != config.dim {
            return Err(Error::Protocol {
                endpoint: endpoint.to_string(),
                batch: batch_index,
                message: format!(
                    "service returned dim {}, config expects {}",
                    response.dim, config.dim
                ),
            });
        }
        if response.vectors.len() != chunk.len() {
            return Err(Error::Protocol {
                endpoint: endpoint.to_string(),
                batch: batch_index,
                message: format!(
                    "sent {} texts, received {} vectors",
                    chunk.len(),
                    response.vectors.len()
                ),
            });
        }
        for values in response.vectors {
            if values.len() != config.dim {
                return Err(Error::Protocol {
                    endpoint: endpoint.to_string(),
                    batch: batch_index,
                    message: format!(
                        "vector of length {} does not match dim {}",
                        values.len(),
                        config.dim
                    ),
                });
            }
            let vector = EmbeddingVector::new(values).map_err(|e| Error::Protocol {
                endpoint: endpoint.to_string(),
                batch: batch_index,
                message: e.to_string(),
            })?;
            out.push(if config.normalize {
                vector.normalized()
            } else {
                vector
            });
        }
    }
    Ok(out)
}

fn post_with_retry(
    agent: &ureq::Agent,
    url: &str,
    endpoint: &str,
    batch_index: usize,
    request: &EmbedRequest<'_>,
) -> Result<EmbedResponse> {
    let body = serde_json::to_value(request).expect("in-memory serialization");
    let mut last_transport = String::new();
    for attempt in 0..ATTEMPTS {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(RETRY_BACKOFF_MS * attempt as u64));
        }
        match agent.post(url).send_json(body.clone()) {
            Ok(response) => {
                return response.into_json().map_err(|e| Error::Protocol {
                    endpoint: endpoint.to_string(),
                    batch: batch_index,
                    message: format!("invalid response body: {e}"),
                });
            }
            Err(ureq::Error::Status(code, response)) => {
                let detail = response.into_string().unwrap_or_default();
                return Err(Error::Protocol {
                    endpoint: endpoint.to_string(),
                    batch: batch_index,
                    message: format!("status {code}: {}", detail.trim()),
                });
            }
            Err(ureq::Error::Transport(t)) => {
                last_transport = t.to_string();
            }
        }
    }
    Err(Error::Transport {
        endpoint: endpoint.to_string(),
        batch: batch_index,
        message: last_transport,
    })
}
