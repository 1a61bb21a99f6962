//! Turns raw completion text into reasoning steps and a final answer.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::{PromptTemplate, NUMBER_PLACEHOLDER};

/// How many identical consecutive lines count as the model looping.
pub const REPETITION_RUN: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("raw text is empty")]
    EmptyInput,
    #[error("no reasoning steps found")]
    NoStepsFound,
    #[error("sub-question {0} has no sub-answer")]
    DanglingSubQuestion(usize),
    #[error("no final answer")]
    MissingFinalAnswer,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RenderError {
    #[error("explanation has no steps or a step with empty text")]
    EmptyExplanation,
    #[error("step {0} contains a line break")]
    MultilineText(usize),
}

/// One `(sub-question, sub-answer)` pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningStep {
    pub index: usize,
    pub sub_question: String,
    pub sub_answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Explanation {
    pub steps: Vec<ReasoningStep>,
    #[serde(default)]
    pub final_answer: Option<String>,
    #[serde(default)]
    pub raw_text: String,
}

impl Explanation {
    /// Builds an explanation from `(question, answer)` pairs, indexing in order.
    pub fn from_pairs<Q: Into<String>, A: Into<String>>(
        pairs: impl IntoIterator<Item = (Q, A)>,
        final_answer: Option<&str>,
    ) -> Self {
        let steps = pairs
            .into_iter()
            .enumerate()
            .map(|(index, (q, a))| ReasoningStep { index, sub_question: q.into(), sub_answer: a.into() })
            .collect();
        Explanation { steps, final_answer: final_answer.map(str::to_string), raw_text: String::new() }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Steps and final answer equal, ignoring `raw_text`.
    pub fn same_content(&self, other: &Explanation) -> bool {
        self.steps == other.steps && self.final_answer == other.final_answer
    }

    pub fn require_final_answer(&self) -> Result<&str, ParseError> {
        self.final_answer.as_deref().ok_or(ParseError::MissingFinalAnswer)
    }

    /// Yes/no reading of the final answer: the last standalone "yes" or "no"
    /// wins, and anything else leaves it unset.
    pub fn answer_polarity(&self) -> Option<bool> {
        static YES_NO: OnceLock<Regex> = OnceLock::new();
        let re = YES_NO.get_or_init(|| Regex::new(r"(?i)\b(yes|no)\b").unwrap());
        let text = self.final_answer.as_deref()?;
        re.find_iter(text).last().map(|m| m.as_str().eq_ignore_ascii_case("yes"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum DegenerateKind {
    #[default]
    None,
    Repetition,
    NoFinalAnswer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SegmentKind {
    Question,
    Answer,
    Final,
}

/// Compiled label matchers for one template.
#[derive(Debug, Clone)]
pub struct ExplanationParser {
    labels: [(SegmentKind, Regex); 3],
}

fn bare_final_regex() -> &'static Regex {
    static BARE: OnceLock<Regex> = OnceLock::new();
    BARE.get_or_init(|| Regex::new(r"(?i)^so\s+the\s+answer\s+is\b").unwrap())
}

/// Regex for a label at the start of a line: case-insensitive, any run of
/// spaces may appear (or vanish) where the label has whitespace or a number.
fn label_regex(label: &str) -> Regex {
    let mut pattern = String::from(r"(?i)^[ \t]*");
    for (i, literal) in label.trim().split(NUMBER_PLACEHOLDER).enumerate() {
        if i > 0 {
            pattern.push_str(r"[ \t]*\d+[ \t]*");
        }
        let mut in_space = false;
        for c in literal.chars() {
            if c.is_whitespace() {
                if !in_space {
                    pattern.push_str(r"[ \t]*");
                }
                in_space = true;
            } else {
                pattern.push_str(&regex::escape(&c.to_string()));
                in_space = false;
            }
        }
    }
    pattern.push_str(r"[ \t]*");
    Regex::new(&pattern).expect("escaped label is a valid regex")
}

impl ExplanationParser {
    pub fn new(template: &PromptTemplate) -> Self {
        ExplanationParser {
            labels: [
                (SegmentKind::Question, label_regex(&template.step_question_label)),
                (SegmentKind::Answer, label_regex(&template.step_answer_label)),
                (SegmentKind::Final, label_regex(&template.final_answer_label)),
            ],
        }
    }

    /// Longest label match wins so that one label being a prefix of another
    /// cannot misclassify a line.
    fn match_label<'a>(&self, line: &'a str) -> Option<(SegmentKind, &'a str)> {
        self.labels
            .iter()
            .filter_map(|(kind, re)| re.find(line).map(|m| (*kind, m.end())))
            .max_by_key(|&(_, end)| end)
            .map(|(kind, end)| (kind, &line[end..]))
    }

    pub fn parse(&self, raw: &str) -> Result<Explanation, ParseError> {
        if raw.trim().is_empty() {
            return Err(ParseError::EmptyInput);
        }
        let mut segments: Vec<(SegmentKind, String)> = Vec::new();
        let mut current: Option<(SegmentKind, String)> = None;
        let mut bare_final: Option<String> = None;

        for line in raw.lines() {
            if let Some((kind, rest)) = self.match_label(line) {
                segments.extend(current.take());
                current = Some((kind, rest.trim().to_string()));
                continue;
            }
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            if bare_final_regex().is_match(text) {
                segments.extend(current.take());
                bare_final = Some(text.to_string());
                continue;
            }
            // Continuation of a wrapped segment; text before the first label
            // is ignored.
            if let Some((_, body)) = current.as_mut() {
                if !body.is_empty() {
                    body.push(' ');
                }
                body.push_str(text);
            }
        }
        segments.extend(current);

        let mut steps = Vec::new();
        let mut pending: Option<String> = None;
        let mut labeled_final: Option<String> = None;
        for (kind, text) in segments {
            match kind {
                SegmentKind::Question if text.is_empty() => {}
                SegmentKind::Question => {
                    if pending.is_some() {
                        return Err(ParseError::DanglingSubQuestion(steps.len()));
                    }
                    pending = Some(text);
                }
                SegmentKind::Answer if text.is_empty() => {}
                SegmentKind::Answer => {
                    if let Some(sub_question) = pending.take() {
                        steps.push(ReasoningStep { index: steps.len(), sub_question, sub_answer: text });
                    }
                }
                SegmentKind::Final if text.is_empty() => {}
                SegmentKind::Final => labeled_final = Some(text),
            }
        }
        if pending.is_some() {
            return Err(ParseError::DanglingSubQuestion(steps.len()));
        }
        if steps.is_empty() {
            return Err(ParseError::NoStepsFound);
        }
        Ok(Explanation { steps, final_answer: labeled_final.or(bare_final), raw_text: raw.to_string() })
    }

    pub fn detect_degenerate(&self, raw: &str) -> DegenerateKind {
        if has_repetition(raw) {
            return DegenerateKind::Repetition;
        }
        match self.parse(raw) {
            Ok(e) if e.final_answer.is_none() => DegenerateKind::NoFinalAnswer,
            _ => DegenerateKind::None,
        }
    }
}

fn has_repetition(raw: &str) -> bool {
    let mut previous: Option<String> = None;
    let mut run = 0;
    for line in raw.lines() {
        let normalized = line.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        if normalized.is_empty() {
            continue;
        }
        if previous.as_deref() == Some(normalized.as_str()) {
            run += 1;
        } else {
            run = 1;
            previous = Some(normalized);
        }
        if run >= REPETITION_RUN {
            return true;
        }
    }
    false
}

pub fn parse_explanation(raw: &str, template: &PromptTemplate) -> Result<Explanation, ParseError> {
    ExplanationParser::new(template).parse(raw)
}

pub fn detect_degenerate(raw: &str, template: &PromptTemplate) -> DegenerateKind {
    ExplanationParser::new(template).detect_degenerate(raw)
}

pub(crate) fn render_steps_into(template: &PromptTemplate, steps: &[ReasoningStep], out: &mut String) {
    for (i, step) in steps.iter().enumerate() {
        out.push_str(&template.question_label(i));
        out.push(' ');
        out.push_str(step.sub_question.trim());
        out.push('\n');
        out.push_str(&template.answer_label(i));
        out.push(' ');
        out.push_str(step.sub_answer.trim());
        out.push('\n');
    }
}

/// Renders the explanation in the template's output format; parsing the
/// result gives back the same steps and final answer.
pub fn render_explanation(explanation: &Explanation, template: &PromptTemplate) -> Result<String, RenderError> {
    if explanation.steps.is_empty() {
        return Err(RenderError::EmptyExplanation);
    }
    for (i, step) in explanation.steps.iter().enumerate() {
        if step.sub_question.trim().is_empty() || step.sub_answer.trim().is_empty() {
            return Err(RenderError::EmptyExplanation);
        }
        if step.sub_question.contains('\n') || step.sub_answer.contains('\n') {
            return Err(RenderError::MultilineText(i));
        }
    }
    let mut out = String::new();
    render_steps_into(template, &explanation.steps, &mut out);
    if let Some(answer) = explanation.final_answer.as_deref().filter(|a| !a.trim().is_empty()) {
        if answer.contains('\n') {
            return Err(RenderError::MultilineText(explanation.steps.len()));
        }
        out.push_str(&template.final_answer_label);
        out.push(' ');
        out.push_str(answer.trim());
        out.push('\n');
    }
    Ok(out)
}
