//! Minimal blocking JSON-over-HTTP helper shared by the live providers.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use ureq::http::Response;
use ureq::Body;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum HttpFailure {
    Transport(String),
    Status { code: u16, retry_after_ms: Option<u64>, body: String },
    Decode(String),
}

impl std::fmt::Display for HttpFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HttpFailure::Transport(e) => write!(f, "transport error: {e}"),
            HttpFailure::Status { code, body, .. } => write!(f, "HTTP {code}: {body}"),
            HttpFailure::Decode(e) => write!(f, "bad response body: {e}"),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct HttpClient {
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn new(timeout: Duration) -> Self {
        let agent =
            ureq::Agent::config_builder().http_status_as_error(false).timeout_global(Some(timeout)).build().into();
        HttpClient { agent }
    }

    pub fn post_json<B: Serialize, T: DeserializeOwned>(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &B,
    ) -> Result<T, HttpFailure> {
        let mut req = self.agent.post(url);
        if let Some(token) = bearer {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let resp = req.send_json(body).map_err(|e| HttpFailure::Transport(e.to_string()))?;
        decode(resp)
    }

    pub fn get_json<T: DeserializeOwned>(&self, url: &str, query: &[(&str, &str)]) -> Result<T, HttpFailure> {
        let mut req = self.agent.get(url);
        for (k, v) in query {
            req = req.query(*k, *v);
        }
        let resp = req.call().map_err(|e| HttpFailure::Transport(e.to_string()))?;
        decode(resp)
    }
}

fn decode<T: DeserializeOwned>(mut resp: Response<Body>) -> Result<T, HttpFailure> {
    let status = resp.status().as_u16();
    if !(200..300).contains(&status) {
        let retry_after_ms = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<f64>().ok())
            .map(|secs| (secs * 1000.0) as u64);
        let body = resp.body_mut().read_to_string().unwrap_or_default();
        return Err(HttpFailure::Status { code: status, retry_after_ms, body });
    }
    resp.body_mut().read_json::<T>().map_err(|e| HttpFailure::Decode(e.to_string()))
}
