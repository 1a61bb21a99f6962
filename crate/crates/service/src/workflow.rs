//! Question in, annotatable task out: compose, complete, parse, retrieve,
//! store.

use std::sync::Arc;

use anyhow::Context;
use chrono::{DateTime, Duration, TimeZone, Utc};
use stepverify_core::annotation::VerificationTask;
use stepverify_core::evidence::{
    Embedder, EvidencePipeline, FixtureSearchProvider, HashedBagOfWords, HttpEmbedder, RecordingSearchProvider,
    SearchFixtureStore, SearchProvider, WebSearchProvider,
};
use stepverify_core::exec::Execution;
use stepverify_core::export::ExportOptions;
use stepverify_core::gateway::{
    CompletionProvider, CompletionRequest, FixtureProvider, FixtureStore, HttpCompletionProvider, LlmGateway,
    RecordingProvider,
};
use stepverify_core::parser::{DegenerateKind, Explanation, ExplanationParser, ParseError};
use stepverify_core::prompt::{compose_prompt, PromptError, PromptLibrary};
use stepverify_core::store::{AnnotationStore, Clock, NewTask};

use crate::config::ServiceConfig;
use crate::error::ApiError;

pub const DEFAULT_TEMPLATE: &str = "strategyqa";

/// A clock that starts at 2024-01-01T00:00:00Z and advances one second per
/// reading, so offline runs produce identical timestamps.
pub fn logical_clock() -> Clock {
    let start = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    let ticks = std::sync::atomic::AtomicI64::new(0);
    Arc::new(move || -> DateTime<Utc> {
        start + Duration::seconds(ticks.fetch_add(1, std::sync::atomic::Ordering::SeqCst))
    })
}

pub fn load_library(config: &ServiceConfig) -> Result<PromptLibrary, PromptError> {
    match &config.prompt_library_path {
        Some(path) => PromptLibrary::from_path(path),
        None => Ok(PromptLibrary::builtin()),
    }
}

pub fn export_options(config: &ServiceConfig) -> ExportOptions {
    ExportOptions {
        negative_threshold: config.export.negative_threshold,
        nei_claim: config.export.nei_claim,
        execution: Execution::default(),
    }
}

pub struct Workflow {
    pub library: PromptLibrary,
    pub gateway: LlmGateway,
    pub evidence: EvidencePipeline,
    pub store: Arc<AnnotationStore>,
    pub export_options: ExportOptions,
    pub offline: bool,
}

impl Workflow {
    /// Wires providers as the config says. Offline mode replays fixtures
    /// and stamps records with [`logical_clock`].
    pub fn from_config(config: &ServiceConfig) -> anyhow::Result<Self> {
        config.validate()?;
        let library = load_library(config)?;
        let completions = config
            .fixtures
            .completions
            .as_ref()
            .map(|p| FixtureStore::open(p).map(Arc::new))
            .transpose()
            .context("opening completion fixtures")?;
        let searches = config
            .fixtures
            .search
            .as_ref()
            .map(|p| SearchFixtureStore::open(p).map(Arc::new))
            .transpose()
            .context("opening search fixtures")?;

        let (completion, search): (Arc<dyn CompletionProvider>, Arc<dyn SearchProvider>) = if config.offline_mode {
            let (Some(c), Some(s)) = (completions, searches) else { unreachable!("validated above") };
            (Arc::new(FixtureProvider::new(c)), Arc::new(FixtureSearchProvider::new(s)))
        } else {
            let live_c: Arc<dyn CompletionProvider> =
                Arc::new(HttpCompletionProvider::new(config.completion.clone().expect("validated")));
            let live_s: Arc<dyn SearchProvider> =
                Arc::new(WebSearchProvider::new(config.search.clone().expect("validated")));
            match (config.fixtures.record, completions, searches) {
                (true, Some(c), Some(s)) => {
                    (Arc::new(RecordingProvider::new(live_c, c)), Arc::new(RecordingSearchProvider::new(live_s, s)))
                }
                _ => (live_c, live_s),
            }
        };
        let embedder: Arc<dyn Embedder> = match &config.embedding {
            Some(e) => Arc::new(HttpEmbedder::new(e.clone())),
            None => Arc::new(HashedBagOfWords::default()),
        };
        let clock = if config.offline_mode { logical_clock() } else { Arc::new(Utc::now) };
        let store = AnnotationStore::open(&config.store_path)?.with_clock(clock);
        let evidence = EvidencePipeline::new(search, embedder).with_fanout_limit(config.retrieval_concurrency);
        Ok(Workflow {
            library,
            gateway: LlmGateway::new(completion),
            evidence,
            store: Arc::new(store),
            export_options: export_options(config),
            offline: config.offline_mode,
        })
    }

    /// Runs the whole pipeline for one question. A looping or answerless
    /// completion still yields a task, flagged as degenerate.
    pub fn create_task(&self, question: &str, template_id: &str) -> Result<VerificationTask, ApiError> {
        let question = question.trim();
        let template =
            self.library.get(template_id).ok_or_else(|| ApiError::UnknownTemplate(template_id.to_string()))?;
        let prompt = compose_prompt(template, question).map_err(|e| match e {
            PromptError::EmptyQuestion => ApiError::EmptyQuestion,
            other => ApiError::Internal(other.to_string()),
        })?;
        let request = CompletionRequest::new(prompt).with_stop_sequences(template.stop_sequences.clone());
        let completion = self.gateway.complete(&request)?;

        let parser = ExplanationParser::new(template);
        let degenerate = parser.detect_degenerate(&completion.text);
        let explanation = match parser.parse(&completion.text) {
            Ok(e) => e,
            Err(ParseError::NoStepsFound | ParseError::EmptyInput) if degenerate == DegenerateKind::Repetition => {
                Explanation { steps: Vec::new(), final_answer: None, raw_text: completion.text.clone() }
            }
            Err(e) => return Err(e.into()),
        };
        let bundle = self.evidence.build_evidence_bundle(&explanation);
        let task_id = self.store.create_task(NewTask {
            question: question.to_string(),
            template_id: template_id.to_string(),
            explanation,
            bundle,
            degenerate,
        })?;
        Ok(self.store.get_task(&task_id)?)
    }
}
