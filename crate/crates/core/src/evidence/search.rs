use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EvidenceDocument, EvidenceError};
use crate::http::HttpClient;

pub const DEFAULT_CANDIDATE_LIMIT: usize = 10;

const FORMAT: &str = "stepverify-search/v1";

/// One raw search result, in provider order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub url: String,
    pub title: String,
    pub body: String,
}

pub trait SearchProvider: Send + Sync {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchHit>, EvidenceError>;
}

/// Runs the query and turns hits into ranked candidates. Repeated URLs keep
/// their first (best) position; ranks are then numbered 1.. in provider
/// order and the list is cut at `limit`.
pub fn retrieve_candidates(
    provider: &dyn SearchProvider,
    query: &str,
    limit: usize,
) -> Result<Vec<EvidenceDocument>, EvidenceError> {
    let query = query.trim();
    if query.is_empty() {
        return Err(EvidenceError::EmptyQuery);
    }
    let mut seen = HashSet::new();
    Ok(provider
        .search(query, limit)?
        .into_iter()
        .filter(|hit| seen.insert(hit.url.clone()))
        .take(limit)
        .enumerate()
        .map(|(i, hit)| EvidenceDocument {
            url: hit.url,
            title: hit.title,
            body: hit.body,
            retrieval_rank: i as u32 + 1,
        })
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct SearchFixtureFile {
    format: String,
    queries: BTreeMap<String, Vec<SearchHit>>,
}

/// Recorded search results keyed by the trimmed query string.
///
/// File layout: `{"format": "stepverify-search/v1", "queries": {"<query>": [{"url", "title", "body"}, ..]}}`.
#[derive(Debug, Default)]
pub struct SearchFixtureStore {
    path: Option<PathBuf>,
    queries: RwLock<BTreeMap<String, Vec<SearchHit>>>,
}

impl SearchFixtureStore {
    pub fn in_memory() -> Self {
        SearchFixtureStore::default()
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, EvidenceError> {
        let path = path.as_ref().to_path_buf();
        let queries = if path.exists() {
            let bad = |e: String| EvidenceError::SearchProviderUnavailable(format!("{}: {e}", path.display()));
            let text = fs::read_to_string(&path).map_err(|e| bad(e.to_string()))?;
            let file: SearchFixtureFile = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
            if file.format != FORMAT {
                return Err(bad(format!("unsupported format `{}`", file.format)));
            }
            file.queries
        } else {
            BTreeMap::new()
        };
        Ok(SearchFixtureStore { path: Some(path), queries: RwLock::new(queries) })
    }

    pub fn lookup(&self, query: &str) -> Option<Vec<SearchHit>> {
        self.queries.read().unwrap().get(query.trim()).cloned()
    }

    pub fn record(&self, query: &str, hits: &[SearchHit]) -> Result<(), EvidenceError> {
        let mut queries = self.queries.write().unwrap();
        queries.insert(query.trim().to_string(), hits.to_vec());
        if let Some(path) = &self.path {
            let file = SearchFixtureFile { format: FORMAT.into(), queries: queries.clone() };
            let text = serde_json::to_string_pretty(&file).expect("search fixtures serialize") + "\n";
            let fail = |e: std::io::Error| EvidenceError::StoreWriteFailure(format!("{}: {e}", path.display()));
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(fail)?;
            }
            let tmp = path.with_extension("json.tmp");
            fs::write(&tmp, text).map_err(fail)?;
            fs::rename(&tmp, path).map_err(fail)?;
        }
        Ok(())
    }
}

pub struct FixtureSearchProvider {
    store: Arc<SearchFixtureStore>,
}

impl FixtureSearchProvider {
    pub fn new(store: Arc<SearchFixtureStore>) -> Self {
        FixtureSearchProvider { store }
    }
}

impl SearchProvider for FixtureSearchProvider {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchHit>, EvidenceError> {
        let mut hits = self.store.lookup(query).ok_or_else(|| EvidenceError::FixtureMiss(query.trim().to_string()))?;
        hits.truncate(limit);
        Ok(hits)
    }
}

pub struct RecordingSearchProvider {
    inner: Arc<dyn SearchProvider>,
    store: Arc<SearchFixtureStore>,
}

impl RecordingSearchProvider {
    pub fn new(inner: Arc<dyn SearchProvider>, store: Arc<SearchFixtureStore>) -> Self {
        RecordingSearchProvider { inner, store }
    }
}

impl SearchProvider for RecordingSearchProvider {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchHit>, EvidenceError> {
        let hits = self.inner.search(query, limit)?;
        self.store.record(query, &hits)?;
        Ok(hits)
    }
}

/// Google Programmable Search (Custom Search JSON API) client. The result
/// snippet stands in for the document body.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WebSearchConfig {
    #[serde(default = "default_search_endpoint")]
    pub endpoint: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    #[serde(default)]
    pub engine_id: Option<String>,
}

fn default_search_endpoint() -> String {
    "https://www.googleapis.com/customsearch/v1".into()
}

pub struct WebSearchProvider {
    config: WebSearchConfig,
    client: HttpClient,
}

#[derive(Deserialize)]
struct CseResponse {
    #[serde(default)]
    items: Vec<CseItem>,
}

#[derive(Deserialize)]
struct CseItem {
    link: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    snippet: String,
}

impl WebSearchProvider {
    pub fn new(config: WebSearchConfig) -> Self {
        WebSearchProvider { config, client: HttpClient::new(Duration::from_secs(20)) }
    }
}

impl SearchProvider for WebSearchProvider {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchHit>, EvidenceError> {
        let unavailable = |m: String| EvidenceError::SearchProviderUnavailable(m);
        let key = self.config.api_key.as_deref().ok_or_else(|| unavailable("no search API key configured".into()))?;
        let cx =
            self.config.engine_id.as_deref().ok_or_else(|| unavailable("no search engine id configured".into()))?;
        let num = limit.clamp(1, 10).to_string();
        let resp: CseResponse = self
            .client
            .get_json(&self.config.endpoint, &[("key", key), ("cx", cx), ("q", query), ("num", &num)])
            .map_err(|e| unavailable(e.to_string()))?;
        Ok(resp.items.into_iter().map(|i| SearchHit { url: i.link, title: i.title, body: i.snippet }).collect())
    }
}
