//! Chat-completion backends: the HTTP streaming client, the deterministic
//! mock used by tests and the harness, and the endpoint wrapper that enforces
//! timeouts and per-backend concurrency.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use arena_core::rng::{mix_seed, stream_rng};
use axum::body::Body;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use futures::future::BoxFuture;
use futures::StreamExt;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{mpsc, Semaphore};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

/// Request body of the chat-completion wire protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    pub stream: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend timed out after {0} ms")]
    Timeout(u64),
    #[error("backend request failed: {0}")]
    Http(String),
    #[error("malformed backend stream: {0}")]
    Protocol(String),
}

pub type ChunkSink = mpsc::UnboundedSender<String>;

/// Anything that can answer a chat-completion request, optionally pushing
/// incremental chunks to `sink`, and returning the full text.
pub trait ChatBackend: Send + Sync {
    fn complete(
        &self,
        req: ChatRequest,
        sink: Option<ChunkSink>,
    ) -> BoxFuture<'_, Result<String, BackendError>>;
}

/// A backend plus its serving limits.
pub struct Endpoint {
    pub backend_id: String,
    pub model_name: String,
    pub timeout: Duration,
    semaphore: Semaphore,
    max_concurrent: usize,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    inner: Arc<dyn ChatBackend>,
}

impl Endpoint {
    pub fn new(
        backend_id: impl Into<String>,
        model_name: impl Into<String>,
        timeout: Duration,
        max_concurrent: usize,
        inner: Arc<dyn ChatBackend>,
    ) -> Self {
        Self {
            backend_id: backend_id.into(),
            model_name: model_name.into(),
            timeout,
            semaphore: Semaphore::new(max_concurrent),
            max_concurrent,
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            inner,
        }
    }

    pub fn max_concurrent(&self) -> usize {
        self.max_concurrent
    }

    /// Highest number of simultaneous requests seen so far.
    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    /// Sends `req`, waiting for a concurrency permit first. The timeout covers
    /// the whole exchange, queueing included.
    pub async fn call(
        &self,
        req: ChatRequest,
        sink: Option<ChunkSink>,
    ) -> Result<String, BackendError> {
        let limit = self.timeout.as_millis() as u64;
        let work = async {
            let _permit = self
                .semaphore
                .acquire()
                .await
                .map_err(|e| BackendError::Http(e.to_string()))?;
            let _guard = InFlight::enter(&self.in_flight, &self.peak);
            self.inner.complete(req, sink).await
        };
        tokio::time::timeout(self.timeout, work)
            .await
            .unwrap_or(Err(BackendError::Timeout(limit)))
    }
}

struct InFlight<'a>(&'a AtomicUsize);

impl<'a> InFlight<'a> {
    fn enter(counter: &'a AtomicUsize, peak: &AtomicUsize) -> Self {
        let now = counter.fetch_add(1, Ordering::SeqCst) + 1;
        peak.fetch_max(now, Ordering::SeqCst);
        Self(counter)
    }
}

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

// ---------------------------------------------------------------------------
// HTTP client

#[derive(Deserialize)]
struct StreamChunk {
    choices: Vec<StreamChoice>,
}

#[derive(Deserialize)]
struct StreamChoice {
    #[serde(default)]
    delta: Option<Delta>,
    #[serde(default)]
    message: Option<Delta>,
}

#[derive(Deserialize)]
struct Delta {
    #[serde(default)]
    content: Option<String>,
}

/// Streams from an OpenAI-style `/v1/chat/completions` endpoint.
pub struct HttpBackend {
    client: reqwest::Client,
    url: String,
}

impl HttpBackend {
    pub fn new(base_url: &str) -> Self {
        Self {
            client: reqwest::Client::new(),
            url: format!("{}/v1/chat/completions", base_url.trim_end_matches('/')),
        }
    }

    async fn run(&self, req: ChatRequest, sink: Option<ChunkSink>) -> Result<String, BackendError> {
        let resp = self
            .client
            .post(&self.url)
            .json(&ChatRequest { stream: true, ..req })
            .send()
            .await
            .map_err(|e| BackendError::Http(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(BackendError::Http(format!("status {}", resp.status())));
        }
        let mut body = resp.bytes_stream();
        let mut pending = Vec::new();
        let mut text = String::new();
        while let Some(bytes) = body.next().await {
            let bytes = bytes.map_err(|e| BackendError::Http(e.to_string()))?;
            pending.extend_from_slice(&bytes);
            while let Some(pos) = pending.iter().position(|b| *b == b'\n') {
                let line: Vec<u8> = pending.drain(..=pos).collect();
                let line = String::from_utf8_lossy(&line);
                let line = line.trim();
                let Some(data) = line.strip_prefix("data:") else {
                    continue;
                };
                let data = data.trim();
                if data == "[DONE]" {
                    return Ok(text);
                }
                let chunk: StreamChunk = serde_json::from_str(data)
                    .map_err(|e| BackendError::Protocol(e.to_string()))?;
                for choice in chunk.choices {
                    let piece = choice
                        .delta
                        .or(choice.message)
                        .and_then(|d| d.content)
                        .unwrap_or_default();
                    if piece.is_empty() {
                        continue;
                    }
                    if let Some(s) = &sink {
                        let _ = s.send(piece.clone());
                    }
                    text.push_str(&piece);
                }
            }
        }
        Ok(text)
    }
}

impl ChatBackend for HttpBackend {
    fn complete(
        &self,
        req: ChatRequest,
        sink: Option<ChunkSink>,
    ) -> BoxFuture<'_, Result<String, BackendError>> {
        Box::pin(self.run(req, sink))
    }
}

// ---------------------------------------------------------------------------
// Mock

/// Behaviour of a synthetic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockProfile {
    /// Hidden strength written into every answer as a `[q=…]` marker, so a
    /// synthetic annotator can judge it like a human judges text.
    pub quality: f64,
    pub latency_ms: u64,
    pub failure_rate: f64,
    pub seed: u64,
    pub min_words: usize,
    pub max_words: usize,
    /// Words per streamed chunk.
    pub chunk_words: usize,
}

impl Default for MockProfile {
    fn default() -> Self {
        Self {
            quality: 0.0,
            latency_ms: 0,
            failure_rate: 0.0,
            seed: 0,
            min_words: 12,
            max_words: 40,
            chunk_words: 4,
        }
    }
}

const QUALITY_TAG: &str = "[q=";

/// Reads the marker back out of an answer; `None` for truncated answers.
pub fn quality_marker(text: &str) -> Option<f64> {
    let start = text.rfind(QUALITY_TAG)? + QUALITY_TAG.len();
    let end = start + text[start..].find(']')?;
    text[start..end].parse().ok()
}

const WORDS: &[&str] = &[
    "kaixo", "bai", "ez", "etxea", "mendia", "itsasoa", "hizkuntza", "euskara", "liburua",
    "eguna", "gaua", "ura", "sua", "lurra", "haizea", "ikasi", "idatzi", "irakurri", "galdera",
    "erantzuna", "beraz", "baina", "eta", "edo", "oso", "ondo", "gaur", "bihar", "atzo",
    "herria", "kalea", "ibaia", "zuhaitza", "lorea", "kolorea", "zenbakia", "denbora",
];

fn fnv1a(bytes: &[u8], mut hash: u64) -> u64 {
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn request_hash(req: &ChatRequest) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325;
    h = fnv1a(req.model.as_bytes(), h);
    for m in &req.messages {
        h = fnv1a(m.role.as_bytes(), h);
        h = fnv1a(&[0], h);
        h = fnv1a(m.content.as_bytes(), h);
        h = fnv1a(&[0], h);
    }
    h
}

pub struct MockBackend {
    pub profile: MockProfile,
}

impl MockBackend {
    pub fn new(profile: MockProfile) -> Self {
        Self { profile }
    }

    /// The full answer, or `None` when this request is one of the failures.
    /// A pure function of the profile and the request.
    pub fn answer(&self, req: &ChatRequest) -> Option<Vec<String>> {
        let p = &self.profile;
        let mut rng = stream_rng(mix_seed(p.seed, request_hash(req)), 0);
        if p.failure_rate > 0.0 && rng.gen_bool(p.failure_rate.clamp(0.0, 1.0)) {
            return None;
        }
        let n = rng.gen_range(p.min_words..=p.max_words.max(p.min_words));
        let words: Vec<&str> = (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect();
        let per = p.chunk_words.max(1);
        let mut chunks: Vec<String> = words
            .chunks(per)
            .enumerate()
            .map(|(i, c)| {
                let joined = c.join(" ");
                if i == 0 {
                    joined
                } else {
                    format!(" {joined}")
                }
            })
            .collect();
        chunks.push(format!(" {QUALITY_TAG}{:.6}]", p.quality));
        Some(chunks)
    }

    async fn run(&self, req: ChatRequest, sink: Option<ChunkSink>) -> Result<String, BackendError> {
        let chunks = self.answer(&req);
        let step = Duration::from_millis(self.profile.latency_ms);
        let Some(chunks) = chunks else {
            if !step.is_zero() {
                tokio::time::sleep(step).await;
            }
            return Err(BackendError::Timeout(self.profile.latency_ms));
        };
        let mut text = String::new();
        let per_chunk = step / chunks.len() as u32;
        for c in chunks {
            if !per_chunk.is_zero() {
                tokio::time::sleep(per_chunk).await;
            }
            if let Some(s) = &sink {
                let _ = s.send(c.clone());
            }
            text.push_str(&c);
        }
        Ok(text)
    }
}

impl ChatBackend for MockBackend {
    fn complete(
        &self,
        req: ChatRequest,
        sink: Option<ChunkSink>,
    ) -> BoxFuture<'_, Result<String, BackendError>> {
        Box::pin(self.run(req, sink))
    }
}

/// Serves a mock over the wire protocol. Failing requests hang, so the
/// client's own timeout is what fires.
pub fn mock_router(profile: MockProfile) -> Router {
    Router::new()
        .route("/v1/chat/completions", post(mock_completion))
        .with_state(Arc::new(MockBackend::new(profile)))
}

async fn mock_completion(
    State(mock): State<Arc<MockBackend>>,
    Json(req): Json<ChatRequest>,
) -> Response {
    let Some(chunks) = mock.answer(&req) else {
        tokio::time::sleep(Duration::from_secs(3600)).await;
        return StatusCode::GATEWAY_TIMEOUT.into_response();
    };
    let model = req.model.clone();
    let delay = Duration::from_millis(mock.profile.latency_ms) / chunks.len().max(1) as u32;
    let events = chunks
        .into_iter()
        .map(move |c| {
            let body = serde_json::json!({
                "object": "chat.completion.chunk",
                "model": model,
                "choices": [{"index": 0, "delta": {"content": c}}],
            });
            format!("data: {body}\n\n")
        })
        .chain(std::iter::once("data: [DONE]\n\n".to_string()));
    let stream = futures::stream::iter(events).then(move |e| async move {
        if !delay.is_zero() {
            tokio::time::sleep(delay).await;
        }
        Ok::<_, std::convert::Infallible>(e)
    });
    Response::builder()
        .header(header::CONTENT_TYPE, "text/event-stream")
        .body(Body::from_stream(stream))
        .expect("static response parts")
}

/// Binds a mock server on `addr` (port 0 picks a free one).
pub async fn spawn_mock_server(
    profile: MockProfile,
    addr: SocketAddr,
) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let app = mock_router(profile);
    let handle = tokio::spawn(async move {
        let _ = axum::serve(listener, app).await;
    });
    Ok((local, handle))
}
