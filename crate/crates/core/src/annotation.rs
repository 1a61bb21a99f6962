//! Verification tasks, annotator submissions and their validation rules.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::evidence::EvidenceBundle;
use crate::parser::{DegenerateKind, Explanation, ReasoningStep};

pub const MIN_RATING: i32 = 1;
pub const MAX_RATING: i32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EvidenceRef {
    pub step_index: usize,
    pub display_rank: u32,
}

impl EvidenceRef {
    pub fn new(step_index: usize, display_rank: u32) -> Self {
        EvidenceRef { step_index, display_rank }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepAnnotation {
    pub step_index: usize,
    /// Likert score, 1 (wrong) to 5.
    pub rating: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revised_sub_question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revised_sub_answer: Option<String>,
    #[serde(default)]
    pub checked_evidence: BTreeSet<EvidenceRef>,
}

impl StepAnnotation {
    pub fn rated(step_index: usize, rating: i32) -> Self {
        StepAnnotation {
            step_index,
            rating,
            revised_sub_question: None,
            revised_sub_answer: None,
            checked_evidence: BTreeSet::new(),
        }
    }

    /// Display ranks checked for this step's own evidence list.
    pub fn checked_ranks(&self) -> impl Iterator<Item = u32> + '_ {
        self.checked_evidence.iter().filter(move |r| r.step_index == self.step_index).map(|r| r.display_rank)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorType {
    InsufficientKnowledge,
    OutOfDate,
    WrongFact,
    Other,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub task_id: String,
    pub annotator_id: String,
    pub step_annotations: Vec<StepAnnotation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revised_explanation: Option<Explanation>,
    pub answer_correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revised_answer: Option<String>,
    pub error_type: ErrorType,
    /// Stamped by the store on submission.
    #[serde(default)]
    pub submitted_at: DateTime<Utc>,
}

fn revised_text(candidate: Option<&str>, original: &str) -> Option<String> {
    let c = candidate?.trim();
    (!c.is_empty() && c != original.trim()).then(|| c.to_string())
}

impl AnnotationRecord {
    pub fn step(&self, step_index: usize) -> Option<&StepAnnotation> {
        self.step_annotations.iter().find(|s| s.step_index == step_index)
    }

    pub fn mean_rating(&self) -> Option<f64> {
        if self.step_annotations.is_empty() {
            return None;
        }
        let sum: i32 = self.step_annotations.iter().map(|s| s.rating).sum();
        Some(f64::from(sum) / self.step_annotations.len() as f64)
    }

    pub fn all_rated(&self, rating: i32) -> bool {
        self.step_annotations.iter().all(|s| s.rating == rating)
    }

    /// The annotator's corrected explanation E*: the explicit revision if
    /// given, else the original steps with per-step rewrites applied, else
    /// `None` when nothing was rewritten.
    pub fn effective_revision(&self, original: &Explanation) -> Option<Vec<ReasoningStep>> {
        if let Some(revised) = &self.revised_explanation {
            return Some(revised.steps.clone());
        }
        let touched =
            self.step_annotations.iter().any(|s| s.revised_sub_question.is_some() || s.revised_sub_answer.is_some());
        if !touched {
            return None;
        }
        Some(
            original
                .steps
                .iter()
                .map(|step| {
                    let ann = self.step(step.index);
                    let pick =
                        |r: Option<&String>, o: &str| r.filter(|t| !t.trim().is_empty()).map_or(o, |t| t).to_string();
                    ReasoningStep {
                        index: step.index,
                        sub_question: pick(ann.and_then(|a| a.revised_sub_question.as_ref()), &step.sub_question),
                        sub_answer: pick(ann.and_then(|a| a.revised_sub_answer.as_ref()), &step.sub_answer),
                    }
                })
                .collect(),
        )
    }

    /// sa*_i: the step's own rewritten sub-answer, else step `i` of the
    /// explicit revision, counted only when it differs from the original.
    pub fn revised_sub_answer(&self, original: &ReasoningStep) -> Option<String> {
        let own = self.step(original.index).and_then(|s| s.revised_sub_answer.as_deref());
        revised_text(own, &original.sub_answer).or_else(|| {
            let aligned = self.revised_explanation.as_ref()?.steps.get(original.index)?;
            revised_text(Some(&aligned.sub_answer), &original.sub_answer)
        })
    }

    /// Whether step `i` was rewritten in any way (question or answer).
    pub fn step_revised(&self, original: &ReasoningStep) -> bool {
        if self.revised_sub_answer(original).is_some() {
            return true;
        }
        let own = self.step(original.index).and_then(|s| s.revised_sub_question.as_deref());
        revised_text(own, &original.sub_question).is_some()
            || self
                .revised_explanation
                .as_ref()
                .and_then(|e| e.steps.get(original.index))
                .is_some_and(|s| revised_text(Some(&s.sub_question), &original.sub_question).is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskStatus {
    Open,
    Annotated,
}

impl std::str::FromStr for TaskStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "open" => Ok(TaskStatus::Open),
            "annotated" => Ok(TaskStatus::Annotated),
            other => Err(format!("unknown task status `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationTask {
    pub task_id: String,
    pub question: String,
    pub template_id: String,
    pub explanation: Explanation,
    pub bundle: EvidenceBundle,
    pub status: TaskStatus,
    #[serde(default)]
    pub degenerate: DegenerateKind,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code")]
pub enum ValidationError {
    TaskMismatch { expected: String, found: String },
    EmptyAnnotator,
    StepCountMismatch { expected: usize, found: usize },
    UnknownStep { step: usize },
    DuplicateStep { step: usize },
    RatingOutOfRange { step: usize, rating: i32 },
    UnknownEvidenceRef { step: usize, evidence_step: usize, display_rank: u32 },
    EmptyRevisedExplanation,
    RevisedAnswerMissing,
    RevisedAnswerUnexpected,
    ErrorTypeMissing,
    ErrorTypeUnexpected,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ValidationError::*;
        match self {
            TaskMismatch { expected, found } => write!(f, "record is for task {found}, not {expected}"),
            EmptyAnnotator => f.write_str("annotator id is empty"),
            StepCountMismatch { expected, found } => write!(f, "expected {expected} step annotations, got {found}"),
            UnknownStep { step } => write!(f, "step {step} does not exist"),
            DuplicateStep { step } => write!(f, "step {step} annotated twice"),
            RatingOutOfRange { step, rating } => write!(f, "step {step}: rating {rating} is outside 1..=5"),
            UnknownEvidenceRef { step, evidence_step, display_rank } => {
                write!(f, "step {step}: no evidence at ({evidence_step}, {display_rank})")
            }
            EmptyRevisedExplanation => f.write_str("revised explanation has an empty step or no steps"),
            RevisedAnswerMissing => f.write_str("answer marked incorrect without a revised answer"),
            RevisedAnswerUnexpected => f.write_str("revised answer given for a correct answer"),
            ErrorTypeMissing => f.write_str("an error type is required when a step or the answer is wrong"),
            ErrorTypeUnexpected => f.write_str("error type must be None when everything is rated correct"),
        }
    }
}

/// Every way `record` breaks the schema against `task`. Empty means valid.
pub fn validate_annotation(task: &VerificationTask, record: &AnnotationRecord) -> Vec<ValidationError> {
    let mut errors = Vec::new();
    if record.task_id != task.task_id {
        errors.push(ValidationError::TaskMismatch { expected: task.task_id.clone(), found: record.task_id.clone() });
    }
    if record.annotator_id.trim().is_empty() {
        errors.push(ValidationError::EmptyAnnotator);
    }
    let n = task.explanation.steps.len();
    if record.step_annotations.len() != n {
        errors.push(ValidationError::StepCountMismatch { expected: n, found: record.step_annotations.len() });
    }
    let mut seen = HashSet::new();
    for ann in &record.step_annotations {
        let step = ann.step_index;
        if step >= n {
            errors.push(ValidationError::UnknownStep { step });
        } else if !seen.insert(step) {
            errors.push(ValidationError::DuplicateStep { step });
        }
        if !(MIN_RATING..=MAX_RATING).contains(&ann.rating) {
            errors.push(ValidationError::RatingOutOfRange { step, rating: ann.rating });
        }
        for r in &ann.checked_evidence {
            if task.bundle.lookup(r.step_index, r.display_rank).is_none() {
                errors.push(ValidationError::UnknownEvidenceRef {
                    step,
                    evidence_step: r.step_index,
                    display_rank: r.display_rank,
                });
            }
        }
    }
    if let Some(revised) = &record.revised_explanation {
        let blank = revised.steps.is_empty()
            || revised.steps.iter().any(|s| s.sub_question.trim().is_empty() || s.sub_answer.trim().is_empty());
        if blank {
            errors.push(ValidationError::EmptyRevisedExplanation);
        }
    }
    let has_revised_answer = record.revised_answer.as_deref().is_some_and(|a| !a.trim().is_empty());
    match (record.answer_correct, has_revised_answer) {
        (false, false) => errors.push(ValidationError::RevisedAnswerMissing),
        (true, true) => errors.push(ValidationError::RevisedAnswerUnexpected),
        _ => {}
    }
    let flawed = !record.answer_correct || record.step_annotations.iter().any(|s| s.rating < MAX_RATING);
    match (flawed, record.error_type == ErrorType::None) {
        (true, true) => errors.push(ValidationError::ErrorTypeMissing),
        (false, false) => errors.push(ValidationError::ErrorTypeUnexpected),
        _ => {}
    }
    errors
}
