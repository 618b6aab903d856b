//! Content-addressed response cache.
//!
//! One file per request, `<key>.entry`, where `key` is the hex SHA-256 of a
//! canonical JSON serialization of the backend id, sampling parameters and
//! prompt bytes. Entries are written to a temp file in the cache directory
//! and renamed into place. An entry that cannot be read or does not match
//! its key is treated as a miss and rewritten.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, CompletionRequest, CompletionResult, LlmError};

#[derive(Serialize)]
struct KeyMaterial<'a> {
    backend_id: &'a str,
    model_id: &'a str,
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
    prompt: &'a str,
}

fn canonical_request(backend_id: &str, request: &CompletionRequest) -> String {
    let material = KeyMaterial {
        backend_id,
        model_id: &request.model_id,
        temperature: request.temperature,
        top_p: request.top_p,
        max_tokens: request.max_tokens,
        prompt: request.prompt.text(),
    };
    serde_json::to_string(&material).expect("key material serializes")
}

/// Cache key for `request` sent to the backend identified by `backend_id`.
pub fn cache_key(backend_id: &str, request: &CompletionRequest) -> String {
    hex::encode(Sha256::digest(canonical_request(backend_id, request).as_bytes()))
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    request: String,
    response: String,
}

#[derive(Clone, Debug)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.entry"))
    }

    /// Returns the stored response, or `None` on a miss. Corrupt entries are
    /// logged and reported as misses.
    pub fn load(&self, backend_id: &str, request: &CompletionRequest) -> Option<String> {
        let key = cache_key(backend_id, request);
        let path = self.entry_path(&key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return None,
            Err(e) => {
                tracing::warn!(path = %path.display(), error = %e, "unreadable cache entry, treating as miss");
                return None;
            }
        };
        match serde_json::from_slice::<Entry>(&bytes) {
            Ok(entry) if entry.request == canonical_request(backend_id, request) => Some(entry.response),
            Ok(_) => {
                tracing::warn!(path = %path.display(), "cache entry does not match its key, treating as miss");
                None
            }
            Err(e) => {
                tracing::warn!(path = %path.display(), error = %e, "corrupt cache entry, treating as miss");
                None
            }
        }
    }

    pub fn store(&self, backend_id: &str, request: &CompletionRequest, response: &str) -> std::io::Result<PathBuf> {
        let key = cache_key(backend_id, request);
        let entry = Entry {
            request: canonical_request(backend_id, request),
            response: response.to_string(),
        };
        let path = self.entry_path(&key);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(&serde_json::to_vec(&entry).expect("cache entry serializes"))?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(path)
    }
}

/// Serves `request` from `cache` when possible, otherwise asks `backend` and
/// persists the answer.
pub async fn cached_complete_with(
    cache: &ResponseCache,
    backend: &dyn Backend,
    request: &CompletionRequest,
) -> Result<CompletionResult, LlmError> {
    let start = Instant::now();
    let backend_id = backend.id();
    if let Some(text) = cache.load(&backend_id, request) {
        return Ok(CompletionResult {
            text,
            from_cache: true,
            latency: start.elapsed(),
            backend_id,
        });
    }
    let result = super::complete(backend, request).await?;
    cache.store(&backend_id, request, &result.text)?;
    Ok(result)
}

pub async fn cached_complete(
    cache_dir: &Path,
    backend: &dyn Backend,
    request: &CompletionRequest,
) -> Result<CompletionResult, LlmError> {
    let cache = ResponseCache::open(cache_dir)?;
    cached_complete_with(&cache, backend, request).await
}

/// A backend wrapper that consults a [`ResponseCache`] first.
pub struct CachedBackend {
    inner: Arc<dyn Backend>,
    cache: ResponseCache,
}

impl CachedBackend {
    pub fn new(inner: Arc<dyn Backend>, cache: ResponseCache) -> Self {
        Self { inner, cache }
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }
}

#[async_trait]
impl Backend for CachedBackend {
    fn id(&self) -> String {
        self.inner.id()
    }

    async fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, LlmError> {
        cached_complete_with(&self.cache, self.inner.as_ref(), request).await
    }
}
