use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::EvidenceError;
use crate::http::HttpClient;

pub const DEFAULT_HASHED_DIMENSION: usize = 1024;

pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, EvidenceError>;
}

/// `<u, v> / (|u| |v|)`, clamped into `[-1, 1]`.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, EvidenceError> {
    if u.len() != v.len() || u.is_empty() {
        return Err(EvidenceError::DimensionMismatch { left: u.len(), right: v.len() });
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(EvidenceError::ZeroVector);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Deterministic offline embedder.
///
/// Text is lowercased and split on non-alphanumeric characters; each word
/// adds 1.0 to bucket `fnv1a64(word) % dimension`. Texts with no words embed
/// to the zero vector.
#[derive(Debug, Clone)]
pub struct HashedBagOfWords {
    dimension: usize,
}

impl Default for HashedBagOfWords {
    fn default() -> Self {
        HashedBagOfWords { dimension: DEFAULT_HASHED_DIMENSION }
    }
}

impl HashedBagOfWords {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        HashedBagOfWords { dimension }
    }

    pub fn bucket(&self, word: &str) -> usize {
        (fnv1a64(word.as_bytes()) % self.dimension as u64) as usize
    }

    pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
        text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_lowercase)
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

impl Embedder for HashedBagOfWords {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EvidenceError> {
        if text.trim().is_empty() {
            return Err(EvidenceError::EmptyText);
        }
        let mut v = vec![0.0; self.dimension];
        for word in Self::words(text) {
            v[self.bucket(&word)] += 1.0;
        }
        Ok(v)
    }
}

/// Settings for an OpenAI-compatible `/v1/embeddings` endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpEmbedderConfig {
    pub endpoint: String,
    pub model: String,
    pub dimension: usize,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
}

pub struct HttpEmbedder {
    config: HttpEmbedderConfig,
    client: HttpClient,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl HttpEmbedder {
    pub fn new(config: HttpEmbedderConfig) -> Self {
        HttpEmbedder { config, client: HttpClient::new(Duration::from_secs(30)) }
    }
}

impl Embedder for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EvidenceError> {
        if text.trim().is_empty() {
            return Err(EvidenceError::EmptyText);
        }
        let body = serde_json::json!({ "model": self.config.model, "input": text });
        let resp: EmbeddingResponse = self
            .client
            .post_json(&self.config.endpoint, self.config.api_key.as_deref(), &body)
            .map_err(|e| EvidenceError::EmbeddingProviderUnavailable(e.to_string()))?;
        let v = resp
            .data
            .into_iter()
            .next()
            .ok_or_else(|| EvidenceError::EmbeddingProviderUnavailable("empty embedding response".into()))?
            .embedding;
        if v.len() != self.config.dimension {
            return Err(EvidenceError::DimensionMismatch { left: v.len(), right: self.config.dimension });
        }
        Ok(v)
    }
}
