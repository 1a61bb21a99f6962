use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{CompletionProvider, CompletionRequest, CompletionResult, GatewayError};
use crate::http::{HttpClient, HttpFailure};

/// Settings for an OpenAI-compatible `/v1/completions` endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpCompletionConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    60
}

pub struct HttpCompletionProvider {
    config: HttpCompletionConfig,
    client: HttpClient,
    id: String,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    stop: &'a [String],
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    text: String,
    #[serde(default)]
    finish_reason: Option<String>,
}

impl HttpCompletionProvider {
    pub fn new(config: HttpCompletionConfig) -> Self {
        let client = HttpClient::new(Duration::from_secs(config.timeout_secs));
        let id = format!("http:{}", config.model);
        HttpCompletionProvider { config, client, id }
    }
}

impl CompletionProvider for HttpCompletionProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        let body = WireRequest {
            model: &self.config.model,
            prompt: &request.prompt,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            stop: &request.stop_sequences,
        };
        let started = Instant::now();
        let resp: WireResponse = self
            .client
            .post_json(&self.config.endpoint, self.config.api_key.as_deref(), &body)
            .map_err(|e| match e {
                HttpFailure::Status { code: 429, retry_after_ms, .. } => {
                    GatewayError::RateLimited { retry_after_ms: retry_after_ms.unwrap_or(1000) }
                }
                other => GatewayError::ProviderUnavailable(other.to_string()),
            })?;
        let choice = resp
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| GatewayError::ProviderUnavailable("response has no choices".into()))?;
        Ok(CompletionResult {
            text: choice.text,
            provider_id: self.id.clone(),
            latency_ms: started.elapsed().as_millis() as u64,
            truncated: choice.finish_reason.as_deref() == Some("length"),
        })
    }
}
