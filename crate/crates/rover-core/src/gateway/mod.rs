//! Backend-agnostic text generation over interleaved frame/text contexts.
//!
//! A [`Backend`] turns a [`ModelRequest`] — a system prompt plus an ordered
//! sequence of text and frame segments — into response text with usage
//! counters. Three implementations ship here: a deterministic scripted
//! oracle that answers from ground-truth labels ([`oracle::OracleBackend`]),
//! a content-hash cache wrapper with record/replay semantics
//! ([`cache::CachingBackend`]), and a chat-completions HTTP client
//! ([`remote::RemoteBackend`]). A [`MeteredBackend`] wrapper accumulates the
//! totals the frame-accounting invariants are asserted against.

pub mod b64;
pub mod cache;
pub mod oracle;
pub mod remote;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend: {0}")]
    Backend(String),
    #[error("oracle: {0}")]
    Oracle(String),
    #[error("request: {0}")]
    Input(String),
    #[error("gateway io: {0}")]
    Io(#[from] std::io::Error),
    #[error("gateway record: {0}")]
    Parse(#[from] serde_json::Error),
}

/// A video frame handed to a backend: a stable id, the original trajectory
/// step it samples, and an optional encoded image. The scripted oracle works
/// from the timestep alone; remote backends require the payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRef {
    pub id: String,
    pub timestep: usize,
    /// PNG bytes; omitted for metadata-only runs and in transcripts.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub payload: Option<Arc<Vec<u8>>>,
}

impl FrameRef {
    pub fn new(timestep: usize) -> Self {
        FrameRef {
            id: format!("f{timestep}"),
            timestep,
            payload: None,
        }
    }

    pub fn with_payload(timestep: usize, png: Vec<u8>) -> Self {
        FrameRef {
            id: format!("f{timestep}"),
            timestep,
            payload: Some(Arc::new(png)),
        }
    }
}

/// One piece of a model context: literal text or a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Segment {
    Text { text: String },
    Frame { frame: FrameRef },
}

/// An ordered interleaving of text and frames, the unit a backend consumes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TokenSeq {
    pub segments: Vec<Segment>,
}

impl TokenSeq {
    pub fn new() -> Self {
        TokenSeq::default()
    }

    pub fn push_text(&mut self, text: impl Into<String>) {
        let text = text.into();
        // Merge adjacent text so rendering is insensitive to how callers
        // split their writes.
        if let Some(Segment::Text { text: last }) = self.segments.last_mut() {
            last.push_str(&text);
        } else {
            self.segments.push(Segment::Text { text });
        }
    }

    pub fn push_frame(&mut self, frame: FrameRef) {
        self.segments.push(Segment::Frame { frame });
    }

    pub fn frames(&self) -> impl Iterator<Item = &FrameRef> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Frame { frame } => Some(frame),
            Segment::Text { .. } => None,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.frames().count()
    }

    pub fn last_frame(&self) -> Option<&FrameRef> {
        self.frames().last()
    }

    /// Text segments concatenated, frames elided — what directive parsing
    /// and the oracle's structural checks read.
    pub fn text(&self) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            if let Segment::Text { text } = seg {
                out.push_str(text);
            }
        }
        out
    }

    /// True when frame timesteps never decrease — the shape of a single
    /// reasoning line's context (baseline requests may shuffle).
    pub fn frames_in_order(&self) -> bool {
        self.frames()
            .map(|f| f.timestep)
            .collect::<Vec<_>>()
            .windows(2)
            .all(|w| w[0] <= w[1])
    }

    /// Count of text segments, the unit the usage counters report.
    pub fn text_units(&self) -> usize {
        self.segments
            .iter()
            .filter(|s| matches!(s, Segment::Text { .. }))
            .count()
    }
}

/// A full generation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub system_prompt: String,
    pub context: TokenSeq,
    pub max_output_tokens: u32,
    pub temperature: f64,
    /// Retry ordinal; part of the request identity so resampled retries get
    /// fresh cache entries and fresh oracle noise.
    pub attempt: u32,
}

impl ModelRequest {
    pub fn new(system_prompt: impl Into<String>, context: TokenSeq) -> Self {
        ModelRequest {
            system_prompt: system_prompt.into(),
            context,
            max_output_tokens: 512,
            temperature: 0.0,
            attempt: 0,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.context.segments.is_empty() {
            return Err(GatewayError::Input(
                "request context has no segments".into(),
            ));
        }
        Ok(())
    }

    /// Content hash identifying this request: system prompt, every segment
    /// (frame ids, timesteps, payload bytes), and sampling parameters.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.system_prompt.len() as u64).to_le_bytes());
        h.update(self.system_prompt.as_bytes());
        for seg in &self.context.segments {
            match seg {
                Segment::Text { text } => {
                    h.update([0u8]);
                    h.update((text.len() as u64).to_le_bytes());
                    h.update(text.as_bytes());
                }
                Segment::Frame { frame } => {
                    h.update([1u8]);
                    h.update(frame.id.as_bytes());
                    h.update((frame.timestep as u64).to_le_bytes());
                    if let Some(png) = &frame.payload {
                        h.update((png.len() as u64).to_le_bytes());
                        h.update(png.as_slice());
                    }
                }
            }
        }
        h.update(self.max_output_tokens.to_le_bytes());
        h.update(self.temperature.to_le_bytes());
        h.update(self.attempt.to_le_bytes());
        h.finalize().into()
    }

    pub fn fingerprint_hex(&self) -> String {
        self.fingerprint().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Usage {
    pub input_frames: u64,
    pub input_text_units: u64,
    pub output_text_units: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub text: String,
    pub usage: Usage,
    pub backend_id: String,
    pub cached: bool,
}

impl ModelResponse {
    /// Response shell with usage derived from the request, as every backend
    /// reports it.
    pub fn for_request(req: &ModelRequest, backend_id: &str, text: String) -> Self {
        let output_text_units = text.lines().filter(|l| !l.trim().is_empty()).count() as u64;
        ModelResponse {
            usage: Usage {
                input_frames: req.context.frame_count() as u64,
                input_text_units: req.context.text_units() as u64,
                output_text_units,
            },
            text,
            backend_id: backend_id.to_string(),
            cached: false,
        }
    }
}

/// Anything that can answer a [`ModelRequest`]. Implementations must be safe
/// to share across worker threads.
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn generate(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError>;
}

/// Running totals across every request answered through this wrapper.
#[derive(Debug, Default)]
pub struct UsageTotals {
    pub requests: AtomicU64,
    pub input_frames: AtomicU64,
    pub cache_hits: AtomicU64,
    /// Largest single-request frame count seen.
    pub max_request_frames: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UsageSnapshot {
    pub requests: u64,
    pub input_frames: u64,
    pub cache_hits: u64,
    pub max_request_frames: u64,
}

/// Backend wrapper that accumulates [`UsageTotals`] — the counters the
/// linear frame-accounting invariant is checked against.
pub struct MeteredBackend<B> {
    inner: B,
    totals: UsageTotals,
}

impl<B: Backend> MeteredBackend<B> {
    pub fn new(inner: B) -> Self {
        MeteredBackend {
            inner,
            totals: UsageTotals::default(),
        }
    }

    pub fn snapshot(&self) -> UsageSnapshot {
        UsageSnapshot {
            requests: self.totals.requests.load(Ordering::Relaxed),
            input_frames: self.totals.input_frames.load(Ordering::Relaxed),
            cache_hits: self.totals.cache_hits.load(Ordering::Relaxed),
            max_request_frames: self.totals.max_request_frames.load(Ordering::Relaxed),
        }
    }

    pub fn into_inner(self) -> B {
        self.inner
    }
}

impl<B: Backend> Backend for MeteredBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn generate(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        let resp = self.inner.generate(req)?;
        self.totals.requests.fetch_add(1, Ordering::Relaxed);
        self.totals
            .input_frames
            .fetch_add(resp.usage.input_frames, Ordering::Relaxed);
        if resp.cached {
            self.totals.cache_hits.fetch_add(1, Ordering::Relaxed);
        }
        self.totals
            .max_request_frames
            .fetch_max(resp.usage.input_frames, Ordering::Relaxed);
        Ok(resp)
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn generate(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        (**self).generate(req)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn generate(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        (**self).generate(req)
    }
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn id(&self) -> &str {
        (**self).id()
    }
    fn generate(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        (**self).generate(req)
    }
}
