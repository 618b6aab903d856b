//! Scripted replay backend.
//!
//! Replay files are TOML:
//!
//! ```toml
//! default = "Answer: Cleanup"          # optional fallback
//!
//! [[rule]]
//! contains = "Differentiate Cleanup and Early Morning"
//! response = """
//! Cleanup: ...
//! Early Morning: ..."""
//!
//! [[rule]]
//! digest = "<hex sha256 of the exact prompt>"
//! response = "..."
//! ```
//!
//! Rules are tried in file order; the first match wins.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{prompt_digest, Backend, CompletionRequest, CompletionResult, LlmError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    /// Prompt contains this substring.
    Contains(String),
    /// Hex SHA-256 of the exact prompt bytes.
    Digest(String),
}

impl Matcher {
    fn matches(&self, prompt: &str, digest: &str) -> bool {
        match self {
            Matcher::Contains(needle) => prompt.contains(needle.as_str()),
            Matcher::Digest(d) => d.eq_ignore_ascii_case(digest),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(flatten)]
    pub matcher: Matcher,
    pub response: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReplayFile {
    #[serde(default)]
    default: Option<String>,
    #[serde(default, rename = "rule")]
    rules: Vec<MockRule>,
}

/// Deterministic backend answering from an ordered rule list.
///
/// Counts every invocation so tests can assert how often the backend was
/// actually reached (e.g. zero times on a warm cache).
#[derive(Debug)]
pub struct ScriptedMock {
    rules: Vec<MockRule>,
    default: Option<String>,
    id: String,
    calls: AtomicUsize,
}

impl ScriptedMock {
    pub fn new(rules: Vec<MockRule>, default: Option<String>) -> Self {
        let file = ReplayFile { default, rules };
        // The id tracks the script contents so edited scripts never hit stale cache entries.
        let canonical = serde_json::to_string(&file).expect("replay script serializes");
        let id = format!("mock:{}", &hex::encode(Sha256::digest(canonical.as_bytes()))[..16]);
        Self {
            rules: file.rules,
            default: file.default,
            id,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_default(response: impl Into<String>) -> Self {
        Self::new(Vec::new(), Some(response.into()))
    }

    pub fn from_replay_str(text: &str) -> Result<Self, LlmError> {
        let file: ReplayFile = toml::from_str(text).map_err(|e| LlmError::Replay(e.to_string()))?;
        Ok(Self::new(file.rules, file.default))
    }

    pub fn from_replay_file(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Replay(format!("cannot read {}: {e}", path.display())))?;
        Self::from_replay_str(&text)
    }

    /// Number of completions requested so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn respond(&self, prompt: &str) -> Result<&str, LlmError> {
        let digest = prompt_digest(prompt);
        self.rules
            .iter()
            .find(|r| r.matcher.matches(prompt, &digest))
            .map(|r| r.response.as_str())
            .or(self.default.as_deref())
            .ok_or(LlmError::MockMiss { digest })
    }
}

#[async_trait]
impl Backend for ScriptedMock {
    fn id(&self) -> String {
        self.id.clone()
    }

    async fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, LlmError> {
        let start = Instant::now();
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = self.respond(request.prompt.text())?.to_string();
        Ok(CompletionResult {
            text,
            from_cache: false,
            latency: start.elapsed(),
            backend_id: self.id.clone(),
        })
    }
}
