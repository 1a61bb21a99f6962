//! File-backed store for tasks and annotation versions.
//!
//! Layout under the store root:
//!
//! ```text
//! tasks/<task_id>.json         one VerificationTask
//! annotations/<task_id>.json   every submitted version for the task, in submission order
//! ```
//!
//! Files are replaced atomically (write to a temp file, then rename). The
//! whole store is loaded into memory on open; readers work on that snapshot
//! and never see a half-applied write.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{validate_annotation, AnnotationRecord, TaskStatus, ValidationError, VerificationTask};
use crate::evidence::EvidenceBundle;
use crate::parser::{DegenerateKind, Explanation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StoreError {
    #[error("evidence bundle does not match the explanation: {0}")]
    BundleMismatch(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("annotation failed validation ({} problems)", .0.len())]
    ValidationFailed(Vec<ValidationError>),
    #[error("storage failure: {0}")]
    StorageFailure(String),
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

/// One stored submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredAnnotation {
    /// 1-based, counted per `(task, annotator)`.
    pub version: u32,
    /// Set on read for the newest version of each annotator.
    #[serde(default, skip_serializing)]
    pub latest: bool,
    pub record: AnnotationRecord,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TaskFilter {
    pub status: Option<TaskStatus>,
}

/// One task paired with one annotator's latest record; the unit exporters
/// work on.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedTask {
    pub task: VerificationTask,
    pub record: AnnotationRecord,
}

/// New-task input.
#[derive(Debug, Clone)]
pub struct NewTask {
    pub question: String,
    pub template_id: String,
    pub explanation: Explanation,
    pub bundle: EvidenceBundle,
    pub degenerate: DegenerateKind,
}

#[derive(Debug, Clone)]
struct Entry {
    task: VerificationTask,
    annotations: Vec<StoredAnnotation>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotationFile {
    task_id: String,
    versions: Vec<StoredAnnotation>,
}

pub struct AnnotationStore {
    root: Option<PathBuf>,
    index: RwLock<Arc<BTreeMap<String, Arc<Entry>>>>,
    writer: Mutex<u64>,
    clock: Clock,
}

impl std::fmt::Debug for AnnotationStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnnotationStore").field("root", &self.root).finish_non_exhaustive()
    }
}

fn failure(path: &Path, e: impl std::fmt::Display) -> StoreError {
    StoreError::StorageFailure(format!("{}: {e}", path.display()))
}

fn write_atomic(path: &Path, value: &impl Serialize) -> Result<(), StoreError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| failure(path, e))? + "\n";
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text).map_err(|e| failure(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| failure(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, StoreError> {
    let text = fs::read_to_string(path).map_err(|e| failure(path, e))?;
    serde_json::from_str(&text).map_err(|e| failure(path, e))
}

fn task_number(id: &str) -> Option<u64> {
    id.strip_prefix("task-")?.parse().ok()
}

/// Checks that the bundle holds exactly one entry per explanation step.
pub fn check_bundle(explanation: &Explanation, bundle: &EvidenceBundle) -> Result<(), StoreError> {
    if bundle.covers(explanation.steps.len()) && explanation.steps.iter().enumerate().all(|(i, s)| s.index == i) {
        return Ok(());
    }
    let keys: Vec<_> = bundle.steps.iter().map(|s| s.step_index).collect();
    Err(StoreError::BundleMismatch(format!(
        "explanation has {} steps, bundle has entries for {keys:?}",
        explanation.steps.len()
    )))
}

fn mark_latest(mut versions: Vec<StoredAnnotation>) -> Vec<StoredAnnotation> {
    let mut newest: HashMap<String, u32> = HashMap::new();
    for v in &versions {
        let e = newest.entry(v.record.annotator_id.clone()).or_default();
        *e = (*e).max(v.version);
    }
    for v in &mut versions {
        v.latest = newest[&v.record.annotator_id] == v.version;
    }
    versions
}

impl AnnotationStore {
    pub fn in_memory() -> Self {
        AnnotationStore {
            root: None,
            index: RwLock::new(Arc::new(BTreeMap::new())),
            writer: Mutex::new(0),
            clock: Arc::new(Utc::now),
        }
    }

    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        let tasks_dir = root.join("tasks");
        let ann_dir = root.join("annotations");
        for d in [&tasks_dir, &ann_dir] {
            fs::create_dir_all(d).map_err(|e| failure(d, e))?;
        }
        let mut index = BTreeMap::new();
        let mut counter = 0;
        for dirent in fs::read_dir(&tasks_dir).map_err(|e| failure(&tasks_dir, e))? {
            let path = dirent.map_err(|e| failure(&tasks_dir, e))?.path();
            if path.extension().is_none_or(|x| x != "json") {
                continue;
            }
            let task: VerificationTask = read_json(&path)?;
            counter = counter.max(task_number(&task.task_id).unwrap_or(0));
            let ann_path = ann_dir.join(format!("{}.json", task.task_id));
            let annotations = if ann_path.exists() {
                mark_latest(read_json::<AnnotationFile>(&ann_path)?.versions)
            } else {
                Vec::new()
            };
            index.insert(task.task_id.clone(), Arc::new(Entry { task, annotations }));
        }
        Ok(AnnotationStore {
            root: Some(root),
            index: RwLock::new(Arc::new(index)),
            writer: Mutex::new(counter),
            clock: Arc::new(Utc::now),
        })
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    fn snapshot(&self) -> Arc<BTreeMap<String, Arc<Entry>>> {
        self.index.read().unwrap().clone()
    }

    fn publish(&self, entry: Entry) {
        let mut guard = self.index.write().unwrap();
        let mut next = (**guard).clone();
        next.insert(entry.task.task_id.clone(), Arc::new(entry));
        *guard = Arc::new(next);
    }

    fn persist_task(&self, task: &VerificationTask) -> Result<(), StoreError> {
        match &self.root {
            Some(root) => write_atomic(&root.join("tasks").join(format!("{}.json", task.task_id)), task),
            None => Ok(()),
        }
    }

    pub fn create_task(&self, new: NewTask) -> Result<String, StoreError> {
        check_bundle(&new.explanation, &new.bundle)?;
        let mut counter = self.writer.lock().unwrap();
        let task_id = format!("task-{:06}", *counter + 1);
        let task = VerificationTask {
            task_id: task_id.clone(),
            question: new.question,
            template_id: new.template_id,
            explanation: new.explanation,
            bundle: new.bundle,
            status: TaskStatus::Open,
            degenerate: new.degenerate,
            created_at: (self.clock)(),
        };
        self.persist_task(&task)?;
        *counter += 1;
        self.publish(Entry { task, annotations: Vec::new() });
        Ok(task_id)
    }

    pub fn get_task(&self, task_id: &str) -> Result<VerificationTask, StoreError> {
        self.snapshot().get(task_id).map(|e| e.task.clone()).ok_or_else(|| StoreError::UnknownTask(task_id.into()))
    }

    /// Ordered by creation time, then id.
    pub fn list_tasks(&self, filter: TaskFilter) -> Vec<VerificationTask> {
        let mut tasks: Vec<_> = self
            .snapshot()
            .values()
            .filter(|e| filter.status.is_none_or(|s| e.task.status == s))
            .map(|e| e.task.clone())
            .collect();
        tasks.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.task_id.cmp(&b.task_id)));
        tasks
    }

    /// Validates and stores `record` as the next version for its annotator.
    /// Returns the version number.
    pub fn submit_annotation(&self, task_id: &str, mut record: AnnotationRecord) -> Result<u32, StoreError> {
        let _guard = self.writer.lock().unwrap();
        let entry = self.snapshot().get(task_id).cloned().ok_or_else(|| StoreError::UnknownTask(task_id.into()))?;
        let errors = validate_annotation(&entry.task, &record);
        if !errors.is_empty() {
            return Err(StoreError::ValidationFailed(errors));
        }
        record.submitted_at = (self.clock)();
        let version = 1 + entry
            .annotations
            .iter()
            .filter(|a| a.record.annotator_id == record.annotator_id)
            .map(|a| a.version)
            .max()
            .unwrap_or(0);
        let mut versions = entry.annotations.clone();
        versions.push(StoredAnnotation { version, latest: true, record });
        let versions = mark_latest(versions);
        let mut task = entry.task.clone();
        let newly_annotated = task.status != TaskStatus::Annotated;
        task.status = TaskStatus::Annotated;
        if let Some(root) = &self.root {
            let path = root.join("annotations").join(format!("{task_id}.json"));
            write_atomic(&path, &AnnotationFile { task_id: task_id.into(), versions: versions.clone() })?;
            if newly_annotated {
                self.persist_task(&task)?;
            }
        }
        self.publish(Entry { task, annotations: versions });
        Ok(version)
    }

    /// Every stored version for the task, in submission order.
    pub fn get_annotations(&self, task_id: &str) -> Result<Vec<StoredAnnotation>, StoreError> {
        self.snapshot()
            .get(task_id)
            .map(|e| e.annotations.clone())
            .ok_or_else(|| StoreError::UnknownTask(task_id.into()))
    }

    /// The latest record of every annotator on every annotated task, ordered
    /// like [`AnnotationStore::list_tasks`] and then by annotator id.
    pub fn export_snapshot(&self) -> Vec<AnnotatedTask> {
        let snap = self.snapshot();
        let mut out = Vec::new();
        for task in self.list_tasks(TaskFilter { status: Some(TaskStatus::Annotated) }) {
            let mut latest: Vec<_> = snap[&task.task_id].annotations.iter().filter(|a| a.latest).collect();
            latest.sort_by(|a, b| a.record.annotator_id.cmp(&b.record.annotator_id));
            out.extend(latest.into_iter().map(|a| AnnotatedTask { task: task.clone(), record: a.record.clone() }));
        }
        out
    }
}
