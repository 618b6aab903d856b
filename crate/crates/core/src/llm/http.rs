//! Client for completions-compatible HTTP endpoints.

use std::time::{Duration, Instant};

use async_trait::async_trait;
use rand::Rng;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::{Backend, CompletionRequest, CompletionResult, LlmError};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "HAR_API_KEY";

/// Exponential backoff with full jitter for transient failures.
#[derive(Clone, Debug, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_secs(1),
            factor: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Upper bound of the sleep before retry number `retry` (0-based).
    pub fn ceiling(&self, retry: u32) -> Duration {
        self.base_delay.mul_f64(self.factor.powi(retry as i32))
    }

    /// Uniform draw from `[0, ceiling(retry)]`.
    pub fn delay(&self, retry: u32, rng: &mut impl Rng) -> Duration {
        let cap = self.ceiling(retry).as_nanos().min(u64::MAX as u128) as u64;
        Duration::from_nanos(rng.random_range(0..=cap))
    }
}

#[derive(Clone, Debug)]
pub struct HttpConfig {
    pub base_url: String,
    pub completions_path: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    /// Prompts longer than this many characters are refused client-side.
    pub max_prompt_chars: usize,
    pub retry: RetryPolicy,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            completions_path: "/completions".into(),
            api_key: None,
            timeout: Duration::from_secs(60),
            max_prompt_chars: 12_000,
            retry: RetryPolicy::default(),
        }
    }

    /// Same as [`HttpConfig::new`], with the API key taken from `HAR_API_KEY`.
    pub fn from_env(base_url: impl Into<String>) -> Self {
        Self {
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            ..Self::new(base_url)
        }
    }

    fn endpoint(&self) -> String {
        format!(
            "{}/{}",
            self.base_url.trim_end_matches('/'),
            self.completions_path.trim_start_matches('/')
        )
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    top_p: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    text: String,
}

enum Attempt {
    Done(String),
    Transient { rate_limited: bool, message: String },
    Fatal(LlmError),
}

pub struct HttpBackend {
    client: reqwest::Client,
    config: HttpConfig,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, LlmError> {
        let client = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LlmError::BackendUnavailable(e.to_string()))?;
        Ok(Self { client, config })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    async fn attempt(&self, key: &str, request: &CompletionRequest) -> Attempt {
        let body = WireRequest {
            model: &request.model_id,
            prompt: request.prompt.text(),
            temperature: request.temperature,
            top_p: request.top_p,
            max_tokens: request.max_tokens,
        };
        let response = match self.client.post(self.config.endpoint()).bearer_auth(key).json(&body).send().await {
            Ok(r) => r,
            Err(e) if e.is_timeout() || e.is_connect() || e.is_request() => {
                return Attempt::Transient {
                    rate_limited: false,
                    message: e.to_string(),
                }
            }
            Err(e) => return Attempt::Fatal(LlmError::BackendUnavailable(e.to_string())),
        };

        let status = response.status();
        if status.is_success() {
            return match response.json::<WireResponse>().await {
                Ok(wire) => match wire.choices.into_iter().next() {
                    Some(choice) => Attempt::Done(choice.text),
                    None => Attempt::Fatal(LlmError::BackendUnavailable("response has no choices".into())),
                },
                Err(e) => Attempt::Fatal(LlmError::BackendUnavailable(format!("malformed response: {e}"))),
            };
        }

        let body = response.text().await.unwrap_or_default();
        match status {
            StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN => Attempt::Fatal(LlmError::Auth(format!("{status}: {body}"))),
            StatusCode::TOO_MANY_REQUESTS => Attempt::Transient {
                rate_limited: true,
                message: body,
            },
            StatusCode::REQUEST_TIMEOUT => Attempt::Transient {
                rate_limited: false,
                message: format!("{status}"),
            },
            StatusCode::PAYLOAD_TOO_LARGE => Attempt::Fatal(LlmError::PromptTooLarge {
                chars: request.prompt.text().chars().count(),
                budget: self.config.max_prompt_chars,
            }),
            s if s.is_server_error() => Attempt::Transient {
                rate_limited: false,
                message: format!("{status}: {body}"),
            },
            s => Attempt::Fatal(LlmError::Rejected { status: s.as_u16(), body }),
        }
    }
}

#[async_trait]
impl Backend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}", self.config.endpoint())
    }

    async fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, LlmError> {
        let chars = request.prompt.text().chars().count();
        if chars > self.config.max_prompt_chars {
            return Err(LlmError::PromptTooLarge {
                chars,
                budget: self.config.max_prompt_chars,
            });
        }
        let key = self
            .config
            .api_key
            .as_deref()
            .ok_or_else(|| LlmError::Auth(format!("{API_KEY_ENV} is not set")))?;

        let start = Instant::now();
        let mut retry = 0;
        loop {
            let (rate_limited, message) = match self.attempt(key, request).await {
                Attempt::Done(text) => {
                    return Ok(CompletionResult {
                        text,
                        from_cache: false,
                        latency: start.elapsed(),
                        backend_id: self.id(),
                    })
                }
                Attempt::Fatal(e) => return Err(e),
                Attempt::Transient { rate_limited, message } => (rate_limited, message),
            };
            if retry >= self.config.retry.max_retries {
                return Err(if rate_limited {
                    LlmError::RateLimited { attempts: retry + 1 }
                } else {
                    LlmError::BackendUnavailable(format!("{message} (after {} attempts)", retry + 1))
                });
            }
            let delay = self.config.retry.delay(retry, &mut rand::rng());
            tracing::debug!(retry, ?delay, %message, "transient backend failure, backing off");
            tokio::time::sleep(delay).await;
            retry += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn backoff_ceiling_doubles_and_jitter_stays_under_it() {
        let p = RetryPolicy::default();
        assert_eq!(p.ceiling(0), Duration::from_secs(1));
        assert_eq!(p.ceiling(1), Duration::from_secs(2));
        assert_eq!(p.ceiling(2), Duration::from_secs(4));
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for retry in 0..3 {
            for _ in 0..100 {
                assert!(p.delay(retry, &mut rng) <= p.ceiling(retry));
            }
        }
    }

    #[test]
    fn endpoint_joins_cleanly() {
        let mut c = HttpConfig::new("http://localhost:1/v1/");
        assert_eq!(c.endpoint(), "http://localhost:1/v1/completions");
        c.completions_path = "completions".into();
        assert_eq!(c.endpoint(), "http://localhost:1/v1/completions");
    }
}
