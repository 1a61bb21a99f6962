use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use super::{CompletionProvider, CompletionRequest, CompletionResult, GatewayError};

const FORMAT: &str = "stepverify-completions/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub request: CompletionRequest,
    pub result: CompletionResult,
}

#[derive(Debug, Serialize, Deserialize)]
struct FixtureFile {
    format: String,
    entries: BTreeMap<String, FixtureEntry>,
}

/// Recorded completions keyed by [`CompletionRequest::fixture_key`].
///
/// On disk this is one pretty-printed JSON object:
/// `{"format": "stepverify-completions/v1", "entries": {"<key>": {"request": .., "result": ..}}}`.
/// Keys are sorted, so re-recording produces minimal diffs. Re-recording a
/// key replaces the earlier result.
#[derive(Debug, Default)]
pub struct FixtureStore {
    path: Option<PathBuf>,
    entries: RwLock<BTreeMap<String, FixtureEntry>>,
}

impl FixtureStore {
    pub fn in_memory() -> Self {
        FixtureStore::default()
    }

    /// Opens a store file; a missing file starts empty and is created on the
    /// first recording.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref().to_path_buf();
        let entries = if path.exists() {
            let text = fs::read_to_string(&path)
                .map_err(|e| GatewayError::ProviderUnavailable(format!("{}: {e}", path.display())))?;
            let file: FixtureFile = serde_json::from_str(&text)
                .map_err(|e| GatewayError::ProviderUnavailable(format!("{}: {e}", path.display())))?;
            if file.format != FORMAT {
                return Err(GatewayError::ProviderUnavailable(format!(
                    "{}: unsupported fixture format `{}`",
                    path.display(),
                    file.format
                )));
            }
            file.entries
        } else {
            BTreeMap::new()
        };
        Ok(FixtureStore { path: Some(path), entries: RwLock::new(entries) })
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lookup(&self, request: &CompletionRequest) -> Option<CompletionResult> {
        self.entries.read().unwrap().get(&request.fixture_key()).map(|e| e.result.clone())
    }

    pub fn record(&self, request: &CompletionRequest, result: &CompletionResult) -> Result<(), GatewayError> {
        let mut entries = self.entries.write().unwrap();
        entries.insert(request.fixture_key(), FixtureEntry { request: request.clone(), result: result.clone() });
        if let Some(path) = &self.path {
            persist(path, &entries)?;
        }
        Ok(())
    }
}

fn persist(path: &Path, entries: &BTreeMap<String, FixtureEntry>) -> Result<(), GatewayError> {
    let file = FixtureFile { format: FORMAT.to_string(), entries: entries.clone() };
    let text = serde_json::to_string_pretty(&file).expect("fixture file serializes");
    let tmp = path.with_extension("json.tmp");
    let fail = |e: std::io::Error| GatewayError::StoreWriteFailure(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(fail)?;
    }
    fs::write(&tmp, text + "\n").map_err(fail)?;
    fs::rename(&tmp, path).map_err(fail)
}

/// Offline provider: answers only from recorded fixtures.
pub struct FixtureProvider {
    store: Arc<FixtureStore>,
}

impl FixtureProvider {
    pub fn new(store: Arc<FixtureStore>) -> Self {
        FixtureProvider { store }
    }
}

impl CompletionProvider for FixtureProvider {
    fn id(&self) -> &str {
        "fixture"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        self.store.lookup(request).ok_or_else(|| GatewayError::FixtureMiss(request.fixture_key()))
    }
}

/// Forwards to a live provider and records every successful completion.
pub struct RecordingProvider {
    inner: Arc<dyn CompletionProvider>,
    store: Arc<FixtureStore>,
}

impl RecordingProvider {
    pub fn new(inner: Arc<dyn CompletionProvider>, store: Arc<FixtureStore>) -> Self {
        RecordingProvider { inner, store }
    }
}

impl CompletionProvider for RecordingProvider {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        let result = self.inner.complete(request)?;
        self.store.record(request, &result)?;
        Ok(result)
    }
}
