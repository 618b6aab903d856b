//! Completion backends.
//!
//! A [`Backend`] turns a [`CompletionRequest`] into text. Two implementations
//! ship here: [`HttpBackend`] for completions-compatible endpoints and
//! [`ScriptedMock`] for replaying canned responses. [`CachedBackend`] wraps
//! either one with an on-disk, content-addressed response cache.

mod cache;
mod http;
mod mock;

use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::prompt::PromptText;

pub use cache::{cache_key, cached_complete, CachedBackend, ResponseCache};
pub use http::{HttpBackend, HttpConfig, RetryPolicy, API_KEY_ENV};
pub use mock::{Matcher, MockRule, ScriptedMock};

/// Default model. Any completions-compatible model id can be configured.
pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo-instruct";

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend rejected the request ({status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("prompt has {chars} characters, budget is {budget}")]
    PromptTooLarge { chars: usize, budget: usize },
    #[error("no scripted response matches prompt {digest}")]
    MockMiss { digest: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid replay file: {0}")]
    Replay(String),
    #[error("cache I/O: {0}")]
    Cache(#[from] std::io::Error),
}

/// Sampling parameters shared by every request of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub model_id: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            model_id: DEFAULT_MODEL.to_string(),
            temperature: 0.0,
            top_p: 0.5,
            max_tokens: 512,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompletionRequest {
    pub model_id: String,
    pub prompt: PromptText,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

impl CompletionRequest {
    pub fn new(prompt: PromptText, params: &GenerationParams) -> Self {
        Self {
            model_id: params.model_id.clone(),
            prompt,
            temperature: params.temperature,
            top_p: params.top_p,
            max_tokens: params.max_tokens,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.model_id.trim().is_empty() {
            return Err(LlmError::InvalidRequest("model id is empty".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(LlmError::InvalidRequest(format!("temperature {} must be >= 0", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(LlmError::InvalidRequest(format!("top_p {} must be in (0, 1]", self.top_p)));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompletionResult {
    pub text: String,
    pub from_cache: bool,
    pub latency: Duration,
    pub backend_id: String,
}

#[async_trait]
pub trait Backend: Send + Sync {
    /// Stable identifier; part of every cache key.
    fn id(&self) -> String;

    async fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, LlmError>;
}

/// Validates `request`, then asks `backend` for a completion.
pub async fn complete(backend: &dyn Backend, request: &CompletionRequest) -> Result<CompletionResult, LlmError> {
    request.validate()?;
    backend.complete(request).await
}

/// Hex SHA-256 of the prompt bytes.
pub fn prompt_digest(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}
