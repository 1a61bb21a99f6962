//! Text-completion providers behind one interface.
//!
//! [`LlmGateway`] wraps any [`CompletionProvider`] with a retry policy for
//! rate limiting. [`FixtureProvider`] replays recorded completions keyed by a
//! hash of the whole request, which keeps tests and offline runs
//! deterministic.

mod fixture;
mod http;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use fixture::{FixtureEntry, FixtureProvider, FixtureStore, RecordingProvider};
pub use http::{HttpCompletionConfig, HttpCompletionProvider};

pub const DEFAULT_MAX_TOKENS: u32 = 512;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("invalid completion request: {0}")]
    InvalidRequest(String),
    #[error("completion provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("rate limited, retry after {retry_after_ms} ms")]
    RateLimited { retry_after_ms: u64 },
    #[error("no recorded completion for request {0}")]
    FixtureMiss(String),
    #[error("could not write fixture store: {0}")]
    StoreWriteFailure(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
}

fn default_max_tokens() -> u32 {
    DEFAULT_MAX_TOKENS
}

impl CompletionRequest {
    /// Greedy decoding (temperature 0) with the default token budget.
    pub fn new(prompt: impl Into<String>) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            stop_sequences: Vec::new(),
        }
    }

    pub fn with_stop_sequences(mut self, stops: Vec<String>) -> Self {
        self.stop_sequences = stops;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.prompt.is_empty() {
            return Err(GatewayError::InvalidRequest("prompt is empty".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(GatewayError::InvalidRequest("temperature must be finite and >= 0".into()));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Lowercase hex SHA-256 over the JSON encoding of every request field,
    /// so changing temperature or stops never aliases another entry.
    pub fn fixture_key(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(&canonical))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub provider_id: String,
    pub latency_ms: u64,
    /// The provider stopped because it hit `max_tokens`.
    pub truncated: bool,
}

pub trait CompletionProvider: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, GatewayError>;
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    /// Upper bound on a single wait, whatever the provider asks for.
    pub max_wait: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 3, max_wait: Duration::from_secs(30) }
    }
}

type Sleeper = dyn Fn(Duration) + Send + Sync;

/// Front door for completions. Calls go straight through until the provider
/// reports rate limiting; from then on dispatch is serialized and retried
/// until a call succeeds again.
pub struct LlmGateway {
    provider: Arc<dyn CompletionProvider>,
    retry: RetryPolicy,
    throttled: AtomicBool,
    dispatch: Mutex<()>,
    sleep: Box<Sleeper>,
}

impl LlmGateway {
    pub fn new(provider: Arc<dyn CompletionProvider>) -> Self {
        LlmGateway {
            provider,
            retry: RetryPolicy::default(),
            throttled: AtomicBool::new(false),
            dispatch: Mutex::new(()),
            sleep: Box::new(std::thread::sleep),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_sleeper(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Box::new(sleep);
        self
    }

    pub fn provider_id(&self) -> &str {
        self.provider.id()
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        request.validate()?;
        let mut wait = None;
        if !self.throttled.load(Ordering::Acquire) {
            match self.provider.complete(request) {
                Err(GatewayError::RateLimited { retry_after_ms }) => {
                    self.throttled.store(true, Ordering::Release);
                    wait = Some(retry_after_ms);
                }
                other => return other,
            }
        }

        let _serial = self.dispatch.lock().unwrap_or_else(|p| p.into_inner());
        let mut retries = 0;
        loop {
            if let Some(ms) = wait.take() {
                if retries >= self.retry.max_retries {
                    return Err(GatewayError::RateLimited { retry_after_ms: ms });
                }
                retries += 1;
                (self.sleep)(Duration::from_millis(ms).min(self.retry.max_wait));
            }
            match self.provider.complete(request) {
                Err(GatewayError::RateLimited { retry_after_ms }) => wait = Some(retry_after_ms),
                other => {
                    if other.is_ok() {
                        self.throttled.store(false, Ordering::Release);
                    }
                    return other;
                }
            }
        }
    }
}
