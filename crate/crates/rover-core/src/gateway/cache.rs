//! Record/replay response cache keyed by request content hashes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{Backend, GatewayError, ModelRequest, ModelResponse};

/// What happens on a cache miss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CacheMode {
    /// Ask the wrapped backend and record its answer.
    Record,
    /// Never contact the backend; a miss is an error.
    Replay,
}

/// Caching wrapper: responses are keyed by [`ModelRequest::fingerprint`], so
/// a warm cache answers identical requests without touching the inner
/// backend. In replay mode the inner backend is never called at all.
pub struct CachingBackend<B> {
    inner: B,
    id: String,
    mode: CacheMode,
    entries: Mutex<BTreeMap<String, String>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl<B: Backend> CachingBackend<B> {
    pub fn new(inner: B, mode: CacheMode) -> Self {
        let id = format!("cache({})", inner.id());
        CachingBackend {
            inner,
            id,
            mode,
            entries: Mutex::new(BTreeMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Load previously recorded entries, merging over any already present.
    pub fn load(&self, path: &Path) -> Result<usize, GatewayError> {
        let text = fs::read_to_string(path)?;
        let stored: BTreeMap<String, String> = serde_json::from_str(&text)?;
        let mut entries = self.entries.lock().expect("cache lock");
        let n = stored.len();
        entries.extend(stored);
        Ok(n)
    }

    pub fn save(&self, path: &Path) -> Result<(), GatewayError> {
        let entries = self.entries.lock().expect("cache lock");
        fs::write(path, serde_json::to_string_pretty(&*entries)?)?;
        Ok(())
    }
}

impl<B: Backend> Backend for CachingBackend<B> {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        let key = req.fingerprint_hex();
        if let Some(text) = self.entries.lock().expect("cache lock").get(&key).cloned() {
            self.hits.fetch_add(1, Ordering::Relaxed);
            let mut resp = ModelResponse::for_request(req, &self.id, text);
            resp.cached = true;
            return Ok(resp);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        match self.mode {
            CacheMode::Replay => Err(GatewayError::Backend(format!(
                "replay cache has no entry for request {key}"
            ))),
            CacheMode::Record => {
                let resp = self.inner.generate(req)?;
                self.entries
                    .lock()
                    .expect("cache lock")
                    .insert(key, resp.text.clone());
                Ok(resp)
            }
        }
    }
}
