//! Random annotated tasks and a plain re-statement of the export rules, for
//! checking the exporters against.

#![allow(dead_code)]

use std::collections::BTreeSet;

use chrono::DateTime;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;
use stepverify_core::annotation::{
    validate_annotation, AnnotationRecord, ErrorType, EvidenceRef, StepAnnotation, TaskStatus, VerificationTask,
};
use stepverify_core::evidence::{DocumentChunk, EvidenceBundle, RankedEvidence, StepEvidence};
use stepverify_core::export::{
    CotFinetuneExample, FactLabel, FactVerificationExample, Relation, RetrievalPair, UnlikelihoodExample,
};
use stepverify_core::parser::{render_explanation, DegenerateKind, Explanation, ReasoningStep};
use stepverify_core::prompt::PromptTemplate;
use stepverify_core::store::AnnotatedTask;

const WORDS: &[&str] = &["seal", "coast", "ocean", "river", "pear", "water", "dense", "no", "yes", "city", "live"];

fn sentence(rng: &mut StdRng, tag: &str) -> String {
    let n = rng.gen_range(1..6);
    let body: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect();
    format!("{tag} {}.", body.join(" "))
}

pub fn bundle_for(rng: &mut StdRng, steps: usize) -> EvidenceBundle {
    EvidenceBundle {
        steps: (0..steps)
            .map(|step_index| {
                let n: u32 = *[0, 1, 3, 9, 10, 11, 14].choose(rng).unwrap();
                StepEvidence {
                    step_index,
                    evidence: (1..=n)
                        .map(|r| RankedEvidence {
                            chunk: DocumentChunk {
                                parent_url: format!("https://e.org/{step_index}/{r}"),
                                parent_title: String::new(),
                                retrieval_rank: r,
                                chunk_index: 0,
                                text: format!("step{step_index} rank{r} {}", sentence(rng, "doc")),
                                token_count: 4,
                            },
                            similarity: 1.0 - f64::from(r) / 100.0,
                            display_rank: r,
                        })
                        .collect(),
                    failure: None,
                }
            })
            .collect(),
    }
}

/// A task with 0-5 steps and a random record that passes validation.
pub fn random_item(rng: &mut StdRng, id: usize) -> AnnotatedTask {
    let n = if rng.gen_bool(0.05) { 0 } else { rng.gen_range(1..=5) };
    let steps: Vec<(String, String)> =
        (0..n).map(|i| (sentence(rng, &format!("q{i}")), sentence(rng, &format!("a{i}")))).collect();
    let final_answer = rng.gen_bool(0.9).then(|| sentence(rng, "So the answer is"));
    let explanation = Explanation::from_pairs(steps.clone(), final_answer.as_deref());
    let bundle = bundle_for(rng, n);
    let task_id = format!("task-{id:06}");

    let mut step_annotations = Vec::new();
    for (i, (q, a)) in steps.iter().enumerate() {
        let rating = *[1, 1, 1, 2, 3, 4, 5, 5, 5].choose(rng).unwrap();
        let mut ann = StepAnnotation::rated(i, rating);
        for (s, ev) in bundle.steps.iter().enumerate() {
            for e in &ev.evidence {
                let p = if s == i { 0.25 } else { 0.02 };
                if rng.gen_bool(p) {
                    ann.checked_evidence.insert(EvidenceRef::new(s, e.display_rank));
                }
            }
        }
        ann.revised_sub_answer = match rng.gen_range(0..4) {
            0 => Some(sentence(rng, "fixed")),
            1 => Some(a.clone()),
            _ => None,
        };
        ann.revised_sub_question = match rng.gen_range(0..5) {
            0 => Some(sentence(rng, "reworded")),
            1 => Some(q.clone()),
            _ => None,
        };
        step_annotations.push(ann);
    }
    let revised_explanation = rng.gen_bool(0.3).then(|| {
        let m = rng.gen_range(1..=6);
        let pairs: Vec<(String, String)> = (0..m)
            .map(|i| match steps.get(i) {
                Some(orig) if rng.gen_bool(0.5) => orig.clone(),
                Some((q, _)) if rng.gen_bool(0.5) => (q.clone(), sentence(rng, "better")),
                _ => (sentence(rng, "new q"), sentence(rng, "new a")),
            })
            .collect();
        Explanation::from_pairs(pairs, None)
    });
    let answer_correct = rng.gen_bool(0.5);
    let revised_answer = (!answer_correct).then(|| if rng.gen_bool(0.5) { "Yes" } else { "No" }.to_string());
    let flawed = !answer_correct || step_annotations.iter().any(|s| s.rating < 5);
    let error_type = if flawed {
        *[ErrorType::InsufficientKnowledge, ErrorType::OutOfDate, ErrorType::WrongFact, ErrorType::Other]
            .choose(rng)
            .unwrap()
    } else {
        ErrorType::None
    };
    let task = VerificationTask {
        task_id: task_id.clone(),
        question: format!("Question {id}?"),
        template_id: "strategyqa".into(),
        explanation,
        bundle,
        status: TaskStatus::Annotated,
        degenerate: DegenerateKind::None,
        created_at: DateTime::UNIX_EPOCH,
    };
    let record = AnnotationRecord {
        task_id,
        annotator_id: format!("annotator-{}", rng.gen_range(1..4)),
        step_annotations,
        revised_explanation,
        answer_correct,
        revised_answer,
        error_type,
        submitted_at: DateTime::UNIX_EPOCH,
    };
    assert_eq!(validate_annotation(&task, &record), [], "generator produced an invalid record");
    AnnotatedTask { task, record }
}

fn render(steps: &[ReasoningStep], t: &PromptTemplate) -> String {
    render_explanation(&Explanation { steps: steps.to_vec(), final_answer: None, raw_text: String::new() }, t).unwrap()
}

fn changed(candidate: Option<&String>, original: &str) -> Option<String> {
    candidate.map(|c| c.trim().to_string()).filter(|c| !c.is_empty() && c != original.trim())
}

// The rules, transcribed one clause at a time.

pub fn oracle_cot(it: &AnnotatedTask, t: &PromptTemplate) -> Option<CotFinetuneExample> {
    let (e, r) = (&it.task.explanation, &it.record);
    let rewritten =
        r.step_annotations.iter().any(|s| s.revised_sub_question.is_some() || s.revised_sub_answer.is_some());
    let steps: Vec<ReasoningStep> = if let Some(x) = &r.revised_explanation {
        x.steps.clone()
    } else if rewritten {
        let pick = |v: &Option<String>, o: &String| v.clone().unwrap_or_else(|| o.clone());
        (e.steps.iter().zip(&r.step_annotations))
            .map(|(s, a)| ReasoningStep {
                index: s.index,
                sub_question: pick(&a.revised_sub_question, &s.sub_question),
                sub_answer: pick(&a.revised_sub_answer, &s.sub_answer),
            })
            .collect()
    } else if !e.steps.is_empty() && r.answer_correct && r.step_annotations.iter().all(|s| s.rating == 5) {
        e.steps.clone()
    } else {
        return None;
    };
    let answer = if r.answer_correct { e.final_answer.clone()? } else { r.revised_answer.clone()? };
    Some(CotFinetuneExample { question: it.task.question.clone(), explanation: render(&steps, t), answer })
}

pub fn oracle_unlikelihood(it: &AnnotatedTask, t: &PromptTemplate, threshold: f64) -> Option<UnlikelihoodExample> {
    let ratings: Vec<f64> = it.record.step_annotations.iter().map(|s| f64::from(s.rating)).collect();
    let mean = ratings.iter().sum::<f64>() / ratings.len() as f64;
    (!ratings.is_empty() && mean <= threshold).then(|| UnlikelihoodExample {
        question: it.task.question.clone(),
        negative_explanation: render(&it.task.explanation.steps, t),
        mean_rating: mean,
    })
}

/// `(checked ranks of step i on its own list, lowest-display-ranked chunk, sa*_i, step revised)`.
fn step_facts(it: &AnnotatedTask, i: usize) -> (BTreeSet<u32>, Option<&RankedEvidence>, Option<String>, bool) {
    let (s, a) = (&it.task.explanation.steps[i], &it.record.step_annotations[i]);
    let list = &it.task.bundle.steps[i].evidence;
    let checked = a.checked_evidence.iter().filter(|r| r.step_index == i).map(|r| r.display_rank).collect();
    let low = list.iter().find(|e| e.display_rank as usize == list.len().min(10));
    let aligned = it.record.revised_explanation.as_ref().and_then(|x| x.steps.get(i));
    let sa_star = changed(a.revised_sub_answer.as_ref(), &s.sub_answer)
        .or_else(|| changed(aligned.map(|x| &x.sub_answer), &s.sub_answer));
    let q_changed = changed(a.revised_sub_question.as_ref(), &s.sub_question).is_some()
        || changed(aligned.map(|x| &x.sub_question), &s.sub_question).is_some();
    let revised = sa_star.is_some() || q_changed;
    (checked, low, sa_star, revised)
}

pub fn oracle_fact(it: &AnnotatedTask) -> Vec<FactVerificationExample> {
    let mut out = Vec::new();
    for i in 0..it.task.explanation.steps.len() {
        let (checked, low, sa_star, _) = step_facts(it, i);
        if it.record.step_annotations[i].rating != 1 || checked.is_empty() {
            continue;
        }
        let sa = it.task.explanation.steps[i].sub_answer.clone();
        let text = |r: u32| it.task.bundle.steps[i].evidence[r as usize - 1].chunk.text.clone();
        let ex = |claim: &String, evidence, label| FactVerificationExample { claim: claim.clone(), evidence, label };
        out.extend(checked.iter().map(|&r| ex(&sa, text(r), FactLabel::Refuted)));
        if let Some(star) = &sa_star {
            out.extend(checked.iter().map(|&r| ex(star, text(r), FactLabel::Supported)));
        }
        if let Some(low) = low.filter(|l| !checked.contains(&l.display_rank)) {
            out.push(ex(sa_star.as_ref().unwrap_or(&sa), low.chunk.text.clone(), FactLabel::NotEnoughInfo));
        }
    }
    out
}

pub fn oracle_retrieval(it: &AnnotatedTask) -> Vec<RetrievalPair> {
    let mut out = Vec::new();
    for i in 0..it.task.explanation.steps.len() {
        let (checked, low, _, revised) = step_facts(it, i);
        let query = it.task.explanation.steps[i].sub_question.clone();
        let text = |r: u32| it.task.bundle.steps[i].evidence[r as usize - 1].chunk.text.clone();
        if it.record.step_annotations[i].rating == 1 && revised {
            out.extend(checked.iter().map(|&r| RetrievalPair {
                query: query.clone(),
                passage: text(r),
                relation: Relation::Positive,
            }));
        }
        if let Some(low) = low.filter(|l| !checked.contains(&l.display_rank)) {
            out.push(RetrievalPair { query, passage: low.chunk.text.clone(), relation: Relation::HardNegative });
        }
    }
    out
}
