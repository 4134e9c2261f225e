//! Minimal in-process encoder service implementing the `/embed` protocol.
//!
//! Exists so the remote client, examples, and protocol tests run with no
//! external service. The server is a bare TCP loop: enough HTTP/1.1 to parse
//! one POST and write one response, nothing more.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::Deserialize;

use crate::text::{fnv1a64, tokenize};

/// How the stub answers embed requests.
#[derive(Debug, Clone)]
pub enum StubBehavior {
    /// 1-dim vector per text: byte length of `prefix + text` (prompted) or
    /// `text` (raw), before any normalization.
    EchoLength,
    /// The reference hash pipeline at the given dimension, applied to
    /// `prefix + "\n" + text` in prompted mode.
    Hash { dim: usize },
    /// Hash pipeline output multiplied by a constant factor, for checking
    /// scale invariance of downstream rankings.
    ScaledHash { dim: usize, scale: f32 },
    /// Always respond with this HTTP status and an empty JSON object.
    HttpError { status: u16 },
    /// Drop the last vector from every response.
    WrongCount,
    /// Report `dim + 1` as the dimension.
    WrongDim,
    /// Sleep before answering, to trip client timeouts.
    Delay { ms: u64 },
}

pub struct StubServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

#[derive(Deserialize)]
struct EmbedRequest {
    mode: String,
    #[serde(default)]
    prefix: Option<String>,
    texts: Vec<String>,
    #[serde(default)]
    pooling: Option<String>,
}

/// Request fields the stub observed, for protocol assertions in tests.
#[derive(Debug, Clone)]
pub struct ObservedRequest {
    pub mode: String,
    pub prefix: Option<String>,
    pub pooling: Option<String>,
    pub n_texts: usize,
}

impl StubServer {
    /// Bind on an ephemeral localhost port and serve exactly `max_requests`
    /// requests, then exit. `observed` (when given) receives one entry per
    /// request.
    pub fn spawn(behavior: StubBehavior, max_requests: usize) -> std::io::Result<StubServer> {
        Self::spawn_observing(behavior, max_requests, None)
    }

    pub fn spawn_observing(
        behavior: StubBehavior,
        max_requests: usize,
        observed: Option<std::sync::mpsc::Sender<ObservedRequest>>,
    ) -> std::io::Result<StubServer> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let stop_flag = stop.clone();
        let handle = std::thread::spawn(move || {
            for _ in 0..max_requests {
                let Ok((stream, _)) = listener.accept() else {
                    return;
                };
                if stop_flag.load(Ordering::Relaxed) {
                    return;
                }
                let _ = handle_connection(stream, &behavior, observed.as_ref());
            }
        });
        Ok(StubServer {
            addr,
            stop,
            handle: Some(handle),
        })
    }

    /// Base URL to use as an encoder endpoint.
    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Wait for the serving thread to finish its request budget.
    pub fn join(mut self) {
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        if let Some(handle) = self.handle.take() {
            // Unblock a pending accept() so the thread can see the flag.
            self.stop.store(true, Ordering::Relaxed);
            let _ = TcpStream::connect(self.addr);
            let _ = handle.join();
        }
    }
}

fn handle_connection(
    stream: TcpStream,
    behavior: &StubBehavior,
    observed: Option<&std::sync::mpsc::Sender<ObservedRequest>>,
) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some(value) = line
            .to_ascii_lowercase()
            .strip_prefix("content-length:")
            .map(|v| v.trim().to_string())
        {
            content_length = value.parse().unwrap_or(0);
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    let mut stream = reader.into_inner();

    if !request_line.starts_with("POST /embed") {
        return write_response(&mut stream, 404, "{}");
    }
    let Ok(request) = serde_json::from_slice::<EmbedRequest>(&body) else {
        return write_response(&mut stream, 400, "{}");
    };
    if let Some(tx) = observed {
        let _ = tx.send(ObservedRequest {
            mode: request.mode.clone(),
            prefix: request.prefix.clone(),
            pooling: request.pooling.clone(),
            n_texts: request.texts.len(),
        });
    }

    match behavior {
        StubBehavior::HttpError { status } => write_response(&mut stream, *status, "{}"),
        StubBehavior::Delay { ms } => {
            std::thread::sleep(std::time::Duration::from_millis(*ms));
            respond_vectors(&mut stream, 1, echo_lengths(&request))
        }
        StubBehavior::EchoLength => respond_vectors(&mut stream, 1, echo_lengths(&request)),
        StubBehavior::Hash { dim } => {
            let vectors = hash_vectors(&request, *dim, 1.0);
            respond_vectors(&mut stream, *dim, vectors)
        }
        StubBehavior::ScaledHash { dim, scale } => {
            let vectors = hash_vectors(&request, *dim, *scale);
            respond_vectors(&mut stream, *dim, vectors)
        }
        StubBehavior::WrongCount => {
            let mut vectors = echo_lengths(&request);
            vectors.pop();
            respond_vectors(&mut stream, 1, vectors)
        }
        StubBehavior::WrongDim => {
            let body = serde_json::json!({
                "dim": 2,
                "vectors": echo_lengths(&request),
            });
            write_response(&mut stream, 200, &body.to_string())
        }
    }
}

fn hash_vectors(request: &EmbedRequest, dim: usize, scale: f32) -> Vec<Vec<f32>> {
    let prompted = request.mode == "prompted";
    let prefix = request.prefix.as_deref().unwrap_or("");
    request
        .texts
        .iter()
        .map(|t| {
            let text = if prompted {
                format!("{prefix}\n{t}")
            } else {
                t.clone()
            };
            let mut values = vec![0.0f32; dim];
            for token in tokenize(&text) {
                values[(fnv1a64(token.as_bytes()) % dim as u64) as usize] += 1.0;
            }
            let norm = values.iter().map(|v| v * v).sum::<f32>().sqrt();
            if norm > 0.0 {
                for v in &mut values {
                    *v = *v / norm * scale;
                }
            }
            values
        })
        .collect()
}

fn echo_lengths(request: &EmbedRequest) -> Vec<Vec<f32>> {
    let prefix = request.prefix.as_deref().unwrap_or("");
    request
        .texts
        .iter()
        .map(|t| {
            let len = if request.mode == "prompted" {
                prefix.len() + t.len()
            } else {
                t.len()
            };
            vec![len as f32]
        })
        .collect()
}

fn respond_vectors(stream: &mut TcpStream, dim: usize, vectors: Vec<Vec<f32>>) -> std::io::Result<()> {
    let body = serde_json::json!({ "dim": dim, "vectors": vectors });
    write_response(stream, 200, &body.to_string())
}

fn write_response(stream: &mut TcpStream, status: u16, body: &str) -> std::io::Result<()> {
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        _ => "Error",
    };
    write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    stream.flush()
}
