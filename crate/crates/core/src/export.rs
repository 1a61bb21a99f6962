//! Training datasets derived from annotated tasks.
//!
//! Four line-delimited JSON files come out of a snapshot:
//!
//! | file | fields |
//! |---|---|
//! | `cot_finetune.jsonl` | `question`, `explanation`, `answer` |
//! | `unlikelihood.jsonl` | `question`, `negative_explanation`, `mean_rating` |
//! | `fact_verification.jsonl` | `claim`, `evidence`, `label` |
//! | `retrieval.jsonl` | `query`, `passage`, `relation` |
//!
//! plus `manifest.json` with counts and skip reasons. Every exporter is a
//! pure function of its input; the same snapshot gives byte-identical files.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::evidence::StepEvidence;
use crate::exec::Execution;
use crate::parser::{render_explanation, Explanation, ReasoningStep};
use crate::prompt::{PromptLibrary, PromptTemplate};
use crate::store::AnnotatedTask;

pub const DEFAULT_NEGATIVE_THRESHOLD: f64 = 2.0;

/// Which sub-answer is paired with the low-ranked chunk for NOTENOUGHINFO.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeiClaim {
    #[default]
    PreferRevised,
    Original,
}

#[derive(Debug, Clone, Copy)]
pub struct ExportOptions {
    /// Records whose mean step rating is at most this become unlikelihood negatives.
    pub negative_threshold: f64,
    pub nei_claim: NeiClaim,
    pub execution: Execution,
}

impl Default for ExportOptions {
    fn default() -> Self {
        ExportOptions {
            negative_threshold: DEFAULT_NEGATIVE_THRESHOLD,
            nei_claim: NeiClaim::default(),
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportKind {
    CotFinetune,
    Unlikelihood,
    FactVerification,
    Retrieval,
}

impl ExportKind {
    pub const ALL: [ExportKind; 4] =
        [ExportKind::CotFinetune, ExportKind::Unlikelihood, ExportKind::FactVerification, ExportKind::Retrieval];

    pub fn as_str(self) -> &'static str {
        match self {
            ExportKind::CotFinetune => "cot_finetune",
            ExportKind::Unlikelihood => "unlikelihood",
            ExportKind::FactVerification => "fact_verification",
            ExportKind::Retrieval => "retrieval",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.jsonl", self.as_str())
    }
}

impl FromStr for ExportKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExportKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| format!("unknown export kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotFinetuneExample {
    pub question: String,
    pub explanation: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlikelihoodExample {
    pub question: String,
    pub negative_explanation: String,
    pub mean_rating: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FactLabel {
    Supported,
    Refuted,
    #[serde(rename = "NOTENOUGHINFO")]
    NotEnoughInfo,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactVerificationExample {
    pub claim: String,
    pub evidence: String,
    pub label: FactLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Relation {
    Positive,
    HardNegative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalPair {
    pub query: String,
    pub passage: String,
    pub relation: Relation,
}

/// Exported rows plus the reason each skipped record was dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Exported<T> {
    pub examples: Vec<T>,
    pub skipped: BTreeMap<String, usize>,
}

impl<T> Exported<T> {
    fn collect(parts: Vec<Result<Vec<T>, &'static str>>) -> Self {
        let mut examples = Vec::new();
        let mut skipped = BTreeMap::new();
        for part in parts {
            match part {
                Ok(rows) => examples.extend(rows),
                Err(reason) => *skipped.entry(reason.to_string()).or_insert(0) += 1,
            }
        }
        Exported { examples, skipped }
    }
}

fn tidy(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Renders steps only (no final-answer line), one labelled line each.
fn render_steps(steps: &[ReasoningStep], template: &PromptTemplate) -> Option<String> {
    let steps = steps
        .iter()
        .enumerate()
        .map(|(index, s)| ReasoningStep { index, sub_question: tidy(&s.sub_question), sub_answer: tidy(&s.sub_answer) })
        .collect();
    render_explanation(&Explanation { steps, final_answer: None, raw_text: String::new() }, template).ok()
}

fn template_for<'a>(item: &AnnotatedTask, library: &'a PromptLibrary) -> Result<&'a PromptTemplate, &'static str> {
    library.get(&item.task.template_id).ok_or("unknown_template")
}

/// E* with A*; or the untouched originals when every step is rated 5 and
/// the answer is marked correct.
pub fn export_cot_finetuning(
    items: &[AnnotatedTask],
    library: &PromptLibrary,
    options: &ExportOptions,
) -> Exported<CotFinetuneExample> {
    Exported::collect(options.execution.map(items, |item| {
        let template = template_for(item, library)?;
        let record = &item.record;
        let original = &item.task.explanation;
        let steps = match record.effective_revision(original) {
            Some(revised) => revised,
            None if record.all_rated(5) && record.answer_correct && !original.is_empty() => original.steps.clone(),
            None => return Err("not_verified_or_revised"),
        };
        let answer = if record.answer_correct {
            original.final_answer.as_deref().map(tidy).filter(|a| !a.is_empty()).ok_or("no_final_answer")?
        } else {
            record.revised_answer.as_deref().map(tidy).ok_or("no_revised_answer")?
        };
        let explanation = render_steps(&steps, template).ok_or("unrenderable")?;
        Ok(vec![CotFinetuneExample { question: item.task.question.clone(), explanation, answer }])
    }))
}

/// The original explanation of every record whose mean rating is at or
/// below `options.negative_threshold`.
pub fn export_unlikelihood(
    items: &[AnnotatedTask],
    library: &PromptLibrary,
    options: &ExportOptions,
) -> Exported<UnlikelihoodExample> {
    Exported::collect(options.execution.map(items, |item| {
        let template = template_for(item, library)?;
        let mean = item.record.mean_rating().ok_or("no_steps")?;
        if mean > options.negative_threshold {
            return Ok(Vec::new());
        }
        let negative_explanation = render_steps(&item.task.explanation.steps, template).ok_or("unrenderable")?;
        Ok(vec![UnlikelihoodExample { question: item.task.question.clone(), negative_explanation, mean_rating: mean }])
    }))
}

struct StepView<'a> {
    step: &'a ReasoningStep,
    rating: i32,
    checked: BTreeSet<u32>,
    evidence: &'a StepEvidence,
}

fn step_views(item: &AnnotatedTask) -> impl Iterator<Item = StepView<'_>> {
    item.task.explanation.steps.iter().filter_map(|step| {
        let ann = item.record.step(step.index)?;
        let evidence = item.task.bundle.step(step.index)?;
        let checked = ann.checked_ranks().filter(|r| evidence.by_rank(*r).is_some()).collect();
        Some(StepView { step, rating: ann.rating, checked, evidence })
    })
}

fn chunk_text(evidence: &StepEvidence, rank: u32) -> String {
    evidence.by_rank(rank).map(|e| e.chunk.text.clone()).unwrap_or_default()
}

/// For each step rated 1 with checked evidence: REFUTED for the original
/// sub-answer against each checked chunk, SUPPORTED for the revised
/// sub-answer against each checked chunk, and NOTENOUGHINFO against the
/// step's low-ranked chunk unless the annotator checked that chunk.
pub fn export_fact_verification(items: &[AnnotatedTask], options: &ExportOptions) -> Exported<FactVerificationExample> {
    Exported::collect(options.execution.map(items, |item| {
        let mut rows = Vec::new();
        for v in step_views(item).filter(|v| v.rating == 1 && !v.checked.is_empty()) {
            let original = tidy(&v.step.sub_answer);
            let revised = item.record.revised_sub_answer(v.step).map(|s| tidy(&s));
            let row = |claim: &str, rank: u32, label| FactVerificationExample {
                claim: claim.to_string(),
                evidence: chunk_text(v.evidence, rank),
                label,
            };
            rows.extend(v.checked.iter().map(|&r| row(&original, r, FactLabel::Refuted)));
            if let Some(revised) = &revised {
                rows.extend(v.checked.iter().map(|&r| row(revised, r, FactLabel::Supported)));
            }
            if let Some(low) = v.evidence.low_ranked().filter(|e| !v.checked.contains(&e.display_rank)) {
                let claim = match options.nei_claim {
                    NeiClaim::PreferRevised => revised.as_deref().unwrap_or(&original),
                    NeiClaim::Original => &original,
                };
                rows.push(row(claim, low.display_rank, FactLabel::NotEnoughInfo));
            }
        }
        Ok(rows)
    }))
}

/// POSITIVE for each checked chunk of a step rated 1 and revised; one
/// HARD_NEGATIVE per step from its low-ranked chunk unless checked.
pub fn export_retrieval_pairs(items: &[AnnotatedTask], options: &ExportOptions) -> Exported<RetrievalPair> {
    Exported::collect(options.execution.map(items, |item| {
        let mut rows = Vec::new();
        for v in step_views(item) {
            let query = tidy(&v.step.sub_question);
            let pair = |rank: u32, relation| RetrievalPair {
                query: query.clone(),
                passage: chunk_text(v.evidence, rank),
                relation,
            };
            if v.rating == 1 && item.record.step_revised(v.step) {
                rows.extend(v.checked.iter().map(|&r| pair(r, Relation::Positive)));
            }
            if let Some(low) = v.evidence.low_ranked().filter(|e| !v.checked.contains(&e.display_rank)) {
                rows.push(pair(low.display_rank, Relation::HardNegative));
            }
        }
        Ok(rows)
    }))
}

pub fn write_jsonl<T: Serialize>(out: &mut impl Write, rows: &[T]) -> io::Result<()> {
    for row in rows {
        serde_json::to_writer(&mut *out, row)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_jsonl<T: Serialize>(rows: &[T]) -> String {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, rows).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub count: usize,
    pub skipped: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub format: String,
    /// Latest `(task, annotator)` records considered.
    pub records: usize,
    pub exports: BTreeMap<ExportKind, ManifestEntry>,
}

/// One export kind as JSONL text, with its manifest entry.
pub fn render_kind(
    kind: ExportKind,
    items: &[AnnotatedTask],
    library: &PromptLibrary,
    options: &ExportOptions,
) -> (String, ManifestEntry) {
    fn done<T: Serialize>(kind: ExportKind, e: Exported<T>) -> (String, ManifestEntry) {
        let entry = ManifestEntry { file: kind.file_name(), count: e.examples.len(), skipped: e.skipped };
        (to_jsonl(&e.examples), entry)
    }
    match kind {
        ExportKind::CotFinetune => done(kind, export_cot_finetuning(items, library, options)),
        ExportKind::Unlikelihood => done(kind, export_unlikelihood(items, library, options)),
        ExportKind::FactVerification => done(kind, export_fact_verification(items, options)),
        ExportKind::Retrieval => done(kind, export_retrieval_pairs(items, options)),
    }
}

/// Writes all four files and `manifest.json` into `dir`.
pub fn export_all(
    items: &[AnnotatedTask],
    library: &PromptLibrary,
    options: &ExportOptions,
    dir: &Path,
) -> io::Result<ExportManifest> {
    fs::create_dir_all(dir)?;
    let mut manifest =
        ExportManifest { format: "stepverify-export/v1".into(), records: items.len(), exports: BTreeMap::new() };
    for kind in ExportKind::ALL {
        let (text, entry) = render_kind(kind, items, library, options);
        fs::write(dir.join(&entry.file), text)?;
        manifest.exports.insert(kind, entry);
    }
    let json = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)? + "\n";
    fs::write(dir.join("manifest.json"), json)?;
    Ok(manifest)
}
