//! Service configuration, read from TOML.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Provider credentials come from the environment only:
//!
//! * `STEPVERIFY_COMPLETION_API_KEY`
//! * `STEPVERIFY_SEARCH_API_KEY`
//! * `STEPVERIFY_EMBEDDING_API_KEY`
//! * `STEPVERIFY_API_TOKEN` (bearer token clients must send, when set)

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stepverify_core::evidence::{HttpEmbedderConfig, WebSearchConfig};
use stepverify_core::export::{NeiClaim, DEFAULT_NEGATIVE_THRESHOLD};
use stepverify_core::gateway::HttpCompletionConfig;
use thiserror::Error;

pub const COMPLETION_KEY_ENV: &str = "STEPVERIFY_COMPLETION_API_KEY";
pub const SEARCH_KEY_ENV: &str = "STEPVERIFY_SEARCH_API_KEY";
pub const EMBEDDING_KEY_ENV: &str = "STEPVERIFY_EMBEDDING_API_KEY";
pub const API_TOKEN_ENV: &str = "STEPVERIFY_API_TOKEN";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("offline mode needs `fixtures.completions` and `fixtures.search`")]
    OfflineWithoutFixtures,
    #[error("online mode needs a `[completion]` section")]
    MissingCompletionProvider,
    #[error("online mode needs a `[search]` section")]
    MissingSearchProvider,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixturePaths {
    pub completions: Option<PathBuf>,
    pub search: Option<PathBuf>,
    /// Online mode writes every live response into the fixture files.
    #[serde(default)]
    pub record: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportSettings {
    #[serde(default = "default_threshold")]
    pub negative_threshold: f64,
    #[serde(default)]
    pub nei_claim: NeiClaim,
}

fn default_threshold() -> f64 {
    DEFAULT_NEGATIVE_THRESHOLD
}

impl Default for ExportSettings {
    fn default() -> Self {
        ExportSettings { negative_threshold: DEFAULT_NEGATIVE_THRESHOLD, nei_claim: NeiClaim::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_port")]
    pub listen_port: u16,
    #[serde(default)]
    pub offline_mode: bool,
    /// Prompt library file; the built-in library is used when unset.
    #[serde(default)]
    pub prompt_library_path: Option<PathBuf>,
    #[serde(default = "default_store")]
    pub store_path: PathBuf,
    #[serde(default = "default_exports")]
    pub export_output_dir: PathBuf,
    /// Maximum sub-questions retrieved and reranked at the same time.
    #[serde(default = "default_fanout")]
    pub retrieval_concurrency: usize,
    #[serde(default)]
    pub completion: Option<HttpCompletionConfig>,
    #[serde(default)]
    pub search: Option<WebSearchConfig>,
    /// Uses the hashed bag-of-words embedder when unset.
    #[serde(default)]
    pub embedding: Option<HttpEmbedderConfig>,
    #[serde(default)]
    pub fixtures: FixturePaths,
    #[serde(default)]
    pub export: ExportSettings,
}

fn default_port() -> u16 {
    8080
}

fn default_store() -> PathBuf {
    PathBuf::from("data/store")
}

fn default_exports() -> PathBuf {
    PathBuf::from("data/exports")
}

fn default_fanout() -> usize {
    4
}

impl Default for ServiceConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config uses defaults")
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let mut config = Self::from_toml(&text, path)?;
        config.resolve_relative_to(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.store_path);
        fix(&mut self.export_output_dir);
        for p in [&mut self.prompt_library_path, &mut self.fixtures.completions, &mut self.fixtures.search]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
    }

    /// Fills provider credentials from the environment.
    pub fn apply_env(&mut self) {
        let var = |name| std::env::var(name).ok().filter(|v: &String| !v.is_empty());
        if let Some(c) = &mut self.completion {
            c.api_key = c.api_key.take().or_else(|| var(COMPLETION_KEY_ENV));
        }
        if let Some(s) = &mut self.search {
            s.api_key = s.api_key.take().or_else(|| var(SEARCH_KEY_ENV));
        }
        if let Some(e) = &mut self.embedding {
            e.api_key = e.api_key.take().or_else(|| var(EMBEDDING_KEY_ENV));
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.offline_mode {
            if self.fixtures.completions.is_none() || self.fixtures.search.is_none() {
                return Err(ConfigError::OfflineWithoutFixtures);
            }
        } else {
            if self.completion.is_none() {
                return Err(ConfigError::MissingCompletionProvider);
            }
            if self.search.is_none() {
                return Err(ConfigError::MissingSearchProvider);
            }
        }
        Ok(())
    }
}
