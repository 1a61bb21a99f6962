//! Few-shot prompt templates and prompt composition.
//!
//! A template holds its own step labels, so the same machinery handles
//! "Sub Question #0 :" style prompts as well as terse "Q#1:" variants. The
//! rendering of a demonstration is exactly what [`crate::parser`] expects to
//! read back.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parser::{render_steps_into, ReasoningStep};

/// Placeholder replaced by the step (or example) number inside labels.
pub const NUMBER_PLACEHOLDER: &str = "{n}";

const DEFAULT_LIBRARY: &str = include_str!("../assets/prompts.toml");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("malformed prompt library: {0}")]
    MalformedLibrary(String),
    #[error("duplicate template id `{0}`")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemonstrationStep {
    pub sub_question: String,
    pub sub_answer: String,
}

/// One worked example shown to the model ahead of the user question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub question: String,
    pub steps: Vec<DemonstrationStep>,
    pub final_answer: String,
}

impl Demonstration {
    pub fn reasoning_steps(&self) -> Vec<ReasoningStep> {
        self.steps
            .iter()
            .enumerate()
            .map(|(index, s)| ReasoningStep {
                index,
                sub_question: s.sub_question.clone(),
                sub_answer: s.sub_answer.clone(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    #[serde(default)]
    pub preamble: String,
    #[serde(default)]
    pub demonstrations: Vec<Demonstration>,
    #[serde(default)]
    pub answer_format_tag: String,
    #[serde(default)]
    pub domain_tag: String,
    /// Rendered before each demonstration and before the final question,
    /// e.g. `"[Example {n}]"`. Examples count from 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example_header: Option<String>,
    pub step_question_label: String,
    pub step_answer_label: String,
    pub final_answer_label: String,
    /// Number printed for the first step label.
    #[serde(default)]
    pub step_number_base: usize,
    /// Stop sequences forwarded to the completion request.
    #[serde(default)]
    pub stop_sequences: Vec<String>,
}

impl PromptTemplate {
    /// A template with the given labels and nothing else.
    pub fn bare(id: &str, question_label: &str, answer_label: &str, final_label: &str) -> Self {
        PromptTemplate {
            id: id.to_string(),
            preamble: String::new(),
            demonstrations: Vec::new(),
            answer_format_tag: String::new(),
            domain_tag: String::new(),
            example_header: None,
            step_question_label: question_label.to_string(),
            step_answer_label: answer_label.to_string(),
            final_answer_label: final_label.to_string(),
            step_number_base: 0,
            stop_sequences: Vec::new(),
        }
    }

    pub fn question_label(&self, index: usize) -> String {
        number_label(&self.step_question_label, index + self.step_number_base)
    }

    pub fn answer_label(&self, index: usize) -> String {
        number_label(&self.step_answer_label, index + self.step_number_base)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("template id is empty".into());
        }
        let labels = [
            ("step_question_label", &self.step_question_label),
            ("step_answer_label", &self.step_answer_label),
            ("final_answer_label", &self.final_answer_label),
        ];
        let mut seen = HashSet::new();
        for (name, label) in labels {
            let key = label_key(label);
            if key.is_empty() {
                return Err(format!("{}: {name} is empty", self.id));
            }
            if !seen.insert(key) {
                return Err(format!("{}: {name} duplicates another label", self.id));
            }
        }
        for (i, demo) in self.demonstrations.iter().enumerate() {
            if demo.steps.is_empty() {
                return Err(format!("{}: demonstration {i} has no steps", self.id));
            }
            if demo.final_answer.trim().is_empty() {
                return Err(format!("{}: demonstration {i} has no final answer", self.id));
            }
            let blank = demo.steps.iter().any(|s| s.sub_question.trim().is_empty() || s.sub_answer.trim().is_empty());
            if demo.question.trim().is_empty() || blank {
                return Err(format!("{}: demonstration {i} has empty text", self.id));
            }
        }
        Ok(())
    }

    fn header(&self, example_number: usize, out: &mut String) {
        if let Some(header) = &self.example_header {
            out.push_str(&number_label(header, example_number));
            out.push('\n');
        }
    }
}

fn number_label(label: &str, n: usize) -> String {
    label.replace(NUMBER_PLACEHOLDER, &n.to_string())
}

/// Labels compare case-insensitively and ignoring whitespace, matching how
/// the parser recognizes them.
fn label_key(label: &str) -> String {
    label.chars().filter(|c| !c.is_whitespace()).flat_map(char::to_lowercase).collect()
}

/// Builds the full prompt: preamble, every demonstration in order, then the
/// user question followed by `Output:`.
pub fn compose_prompt(template: &PromptTemplate, question: &str) -> Result<String, PromptError> {
    let question = question.trim();
    if question.is_empty() {
        return Err(PromptError::EmptyQuestion);
    }
    let mut out = String::with_capacity(4096);
    out.push_str(&template.preamble);
    for (i, demo) in template.demonstrations.iter().enumerate() {
        template.header(i + 1, &mut out);
        out.push_str("Question: ");
        out.push_str(demo.question.trim());
        out.push_str("\nOutput:\n");
        render_steps_into(template, &demo.reasoning_steps(), &mut out);
        out.push_str(&template.final_answer_label);
        out.push(' ');
        out.push_str(demo.final_answer.trim());
        out.push_str("\n\n");
    }
    template.header(template.demonstrations.len() + 1, &mut out);
    out.push_str("Question: ");
    out.push_str(question);
    out.push_str("\nOutput:");
    Ok(out)
}

#[derive(Debug, Deserialize, Serialize, Default)]
struct LibraryFile {
    #[serde(default)]
    templates: Vec<PromptTemplate>,
}

/// An ordered, id-unique set of templates.
#[derive(Debug, Clone, Default)]
pub struct PromptLibrary {
    templates: Vec<PromptTemplate>,
}

impl PromptLibrary {
    pub fn new(templates: Vec<PromptTemplate>) -> Result<Self, PromptError> {
        let mut ids = HashSet::new();
        for t in &templates {
            t.validate().map_err(PromptError::MalformedLibrary)?;
            if !ids.insert(t.id.clone()) {
                return Err(PromptError::DuplicateId(t.id.clone()));
            }
        }
        Ok(PromptLibrary { templates })
    }

    /// The library shipped with the crate.
    pub fn builtin() -> Self {
        let templates = load_prompt_library(DEFAULT_LIBRARY).expect("built-in prompt library is valid");
        PromptLibrary { templates }
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let text = fs::read_to_string(path.as_ref())
            .map_err(|e| PromptError::MalformedLibrary(format!("{}: {e}", path.as_ref().display())))?;
        Ok(PromptLibrary { templates: load_prompt_library(&text)? })
    }

    pub fn get(&self, id: &str) -> Option<&PromptTemplate> {
        self.templates.iter().find(|t| t.id == id)
    }

    pub fn templates(&self) -> &[PromptTemplate] {
        &self.templates
    }

    pub fn to_toml(&self) -> String {
        let file = LibraryFile { templates: self.templates.clone() };
        toml::to_string(&file).expect("templates serialize")
    }
}

/// Parses a TOML prompt library. See `assets/prompts.toml` for the layout.
pub fn load_prompt_library(source: &str) -> Result<Vec<PromptTemplate>, PromptError> {
    let file: LibraryFile =
        toml::from_str(source).map_err(|e| PromptError::MalformedLibrary(e.message().to_string()))?;
    PromptLibrary::new(file.templates).map(|lib| lib.templates)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_demo_template() -> PromptTemplate {
        let mut t = PromptTemplate::bare("t1", "Sub Question #{n} :", "Sub Answer #{n} :", "Final Answer :");
        t.preamble = "Answer with sub-questions.\n\n".into();
        t.demonstrations.push(Demonstration {
            question: "Is water wet?".into(),
            steps: vec![DemonstrationStep {
                sub_question: "What is water?".into(),
                sub_answer: "Water is a liquid.".into(),
            }],
            final_answer: "So the answer is yes.".into(),
        });
        t
    }

    #[test]
    fn zero_demonstrations() {
        let mut t = PromptTemplate::bare("z", "Q{n}:", "A{n}:", "Final:");
        t.preamble = "PRE\n".into();
        assert_eq!(compose_prompt(&t, "Q?").unwrap(), "PRE\nQuestion: Q?\nOutput:");
    }

    #[test]
    fn one_demonstration_golden() {
        let golden = "Answer with sub-questions.\n\n\
Question: Is water wet?\n\
Output:\n\
Sub Question #0 : What is water?\n\
Sub Answer #0 : Water is a liquid.\n\
Final Answer : So the answer is yes.\n\
\n\
Question: Can fish swim?\n\
Output:";
        assert_eq!(compose_prompt(&one_demo_template(), "Can fish swim?").unwrap(), golden);
    }

    #[test]
    fn empty_question_rejected() {
        assert_eq!(compose_prompt(&one_demo_template(), "  \n"), Err(PromptError::EmptyQuestion));
    }

    #[test]
    fn compose_is_deterministic() {
        let t = PromptLibrary::builtin().get("strategyqa").unwrap().clone();
        let a = compose_prompt(&t, "Would a pear sink in water?").unwrap();
        let b = compose_prompt(&t, "Would a pear sink in water?").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn library_with_two_templates() {
        let src = r#"
[[templates]]
id = "a"
step_question_label = "Q#{n}:"
step_answer_label = "A#{n}:"
final_answer_label = "Final:"

[[templates]]
id = "b"
step_question_label = "Sub Question #{n} :"
step_answer_label = "Sub Answer #{n} :"
final_answer_label = "Final Answer :"
"#;
        let lib = load_prompt_library(src).unwrap();
        assert_eq!(lib.iter().map(|t| t.id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
    }

    #[test]
    fn empty_library() {
        assert!(load_prompt_library("").unwrap().is_empty());
    }

    #[test]
    fn duplicate_ids() {
        let src = r#"
[[templates]]
id = "a"
step_question_label = "Q:"
step_answer_label = "A:"
final_answer_label = "F:"
[[templates]]
id = "a"
step_question_label = "Q:"
step_answer_label = "A:"
final_answer_label = "F:"
"#;
        assert_eq!(load_prompt_library(src), Err(PromptError::DuplicateId("a".into())));
    }

    #[test]
    fn malformed_library() {
        assert!(matches!(load_prompt_library("[[templates]]\nid = 3"), Err(PromptError::MalformedLibrary(_))));
        let same_labels =
            "[[templates]]\nid='x'\nstep_question_label='Q:'\nstep_answer_label='q :'\nfinal_answer_label='F:'";
        assert!(matches!(load_prompt_library(same_labels), Err(PromptError::MalformedLibrary(_))));
    }

    #[test]
    fn library_toml_round_trip() {
        let lib = PromptLibrary::builtin();
        let again = load_prompt_library(&lib.to_toml()).unwrap();
        assert_eq!(again, lib.templates());
    }
}
