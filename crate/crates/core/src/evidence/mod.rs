//! Evidence retrieval for reasoning steps.
//!
//! Each sub-question is sent to a search provider as-is. The returned
//! documents are split into chunks of at most [`MAX_CHUNK_TOKENS`] tokens,
//! and every chunk is ranked by cosine similarity between its embedding and
//! the sub-question's. Annotators see chunks in that order.

mod chunk;
mod embed;
mod rerank;
mod search;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::parser::Explanation;

pub use chunk::{chunk_document, chunk_document_with, Tokenizer, WhitespaceTokenizer, MAX_CHUNK_TOKENS};
pub use embed::{
    cosine_similarity, Embedder, HashedBagOfWords, HttpEmbedder, HttpEmbedderConfig, DEFAULT_HASHED_DIMENSION,
};
pub use rerank::rerank;
pub use search::{
    retrieve_candidates, FixtureSearchProvider, RecordingSearchProvider, SearchFixtureStore, SearchHit, SearchProvider,
    WebSearchConfig, WebSearchProvider, DEFAULT_CANDIDATE_LIMIT,
};

/// Display rank used for "low-ranked" evidence (hard negatives and
/// not-enough-info examples). Shorter lists fall back to their last rank.
pub const LOW_RANK_DEPTH: u32 = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvidenceError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("search provider unavailable: {0}")]
    SearchProviderUnavailable(String),
    #[error("no recorded search results for `{0}`")]
    FixtureMiss(String),
    #[error("could not write search fixtures: {0}")]
    StoreWriteFailure(String),
    #[error("document {0} has no tokens")]
    EmptyDocument(String),
    #[error("chunk size must be at least one token")]
    InvalidChunkSize,
    #[error("vector dimensions differ ({left} vs {right})")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cosine similarity of a zero vector")]
    ZeroVector,
    #[error("text to embed is empty")]
    EmptyText,
    #[error("embedding provider unavailable: {0}")]
    EmbeddingProviderUnavailable(String),
    #[error("nothing to rerank")]
    NoChunks,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceDocument {
    pub url: String,
    pub title: String,
    pub body: String,
    /// 1-based position in the provider's result list.
    pub retrieval_rank: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentChunk {
    pub parent_url: String,
    #[serde(default)]
    pub parent_title: String,
    pub retrieval_rank: u32,
    pub chunk_index: usize,
    pub text: String,
    pub token_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEvidence {
    pub chunk: DocumentChunk,
    pub similarity: f64,
    /// 1-based position on screen.
    pub display_rank: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEvidence {
    pub step_index: usize,
    pub evidence: Vec<RankedEvidence>,
    /// Set when retrieval or ranking failed for this step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl StepEvidence {
    pub fn by_rank(&self, display_rank: u32) -> Option<&RankedEvidence> {
        self.evidence.iter().find(|e| e.display_rank == display_rank)
    }

    /// The chunk at display rank [`LOW_RANK_DEPTH`], or the last one when the
    /// list is shorter.
    pub fn low_ranked(&self) -> Option<&RankedEvidence> {
        let n = self.evidence.len() as u32;
        self.by_rank(LOW_RANK_DEPTH.min(n))
    }
}

/// Ranked evidence for every step of one explanation, ordered by step index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EvidenceBundle {
    pub steps: Vec<StepEvidence>,
}

impl EvidenceBundle {
    pub fn step(&self, step_index: usize) -> Option<&StepEvidence> {
        self.steps.iter().find(|s| s.step_index == step_index)
    }

    pub fn lookup(&self, step_index: usize, display_rank: u32) -> Option<&RankedEvidence> {
        self.step(step_index)?.by_rank(display_rank)
    }

    /// `true` when the bundle has exactly one entry per step `0..n`.
    pub fn covers(&self, step_count: usize) -> bool {
        self.steps.len() == step_count && self.steps.iter().enumerate().all(|(i, s)| s.step_index == i)
    }
}

pub struct EvidencePipeline {
    search: Arc<dyn SearchProvider>,
    embedder: Arc<dyn Embedder>,
    tokenizer: Arc<dyn Tokenizer>,
    candidate_limit: usize,
    max_chunk_tokens: usize,
    execution: Execution,
    #[cfg(feature = "parallel")]
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl EvidencePipeline {
    pub fn new(search: Arc<dyn SearchProvider>, embedder: Arc<dyn Embedder>) -> Self {
        EvidencePipeline {
            search,
            embedder,
            tokenizer: Arc::new(WhitespaceTokenizer),
            candidate_limit: DEFAULT_CANDIDATE_LIMIT,
            max_chunk_tokens: MAX_CHUNK_TOKENS,
            execution: Execution::default(),
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    pub fn with_tokenizer(mut self, tokenizer: Arc<dyn Tokenizer>) -> Self {
        self.tokenizer = tokenizer;
        self
    }

    pub fn with_candidate_limit(mut self, limit: usize) -> Self {
        self.candidate_limit = limit.max(1);
        self
    }

    pub fn with_max_chunk_tokens(mut self, max_tokens: usize) -> Self {
        self.max_chunk_tokens = max_tokens;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    /// Caps how many steps (and chunk embeddings) are in flight at once.
    pub fn with_fanout_limit(self, threads: usize) -> Self {
        #[cfg(feature = "parallel")]
        {
            let mut this = self;
            this.pool = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build().ok().map(Arc::new);
            this
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = threads;
            self
        }
    }

    /// Retrieve, chunk and rerank for one query. Documents with no tokens
    /// are skipped.
    pub fn evidence_for_query(&self, query: &str) -> Result<Vec<RankedEvidence>, EvidenceError> {
        let docs = retrieve_candidates(self.search.as_ref(), query, self.candidate_limit)?;
        let mut chunks = Vec::new();
        for doc in &docs {
            match chunk_document_with(doc, self.max_chunk_tokens, self.tokenizer.as_ref()) {
                Ok(c) => chunks.extend(c),
                Err(EvidenceError::EmptyDocument(_)) => {}
                Err(e) => return Err(e),
            }
        }
        if chunks.is_empty() {
            return Ok(Vec::new());
        }
        rerank(query, chunks, self.embedder.as_ref(), self.execution)
    }

    /// Evidence for every step. A failing step gets an empty, flagged entry
    /// and never affects the others.
    pub fn build_evidence_bundle(&self, explanation: &Explanation) -> EvidenceBundle {
        let run = || {
            self.execution.map(&explanation.steps, |step| match self.evidence_for_query(&step.sub_question) {
                Ok(evidence) => StepEvidence { step_index: step.index, evidence, failure: None },
                Err(e) => {
                    tracing::warn!(step = step.index, error = %e, "evidence retrieval failed");
                    StepEvidence { step_index: step.index, evidence: Vec::new(), failure: Some(e.to_string()) }
                }
            })
        };
        #[cfg(feature = "parallel")]
        let steps = match &self.pool {
            Some(pool) => pool.install(run),
            None => run(),
        };
        #[cfg(not(feature = "parallel"))]
        let steps = run();
        EvidenceBundle { steps }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(queries: &[(&str, Vec<SearchHit>)]) -> Arc<SearchFixtureStore> {
        let store = SearchFixtureStore::in_memory();
        for (q, hits) in queries {
            store.record(q, hits).unwrap();
        }
        Arc::new(store)
    }

    fn hit(url: &str, body: &str) -> SearchHit {
        SearchHit { url: url.into(), title: url.into(), body: body.into() }
    }

    fn pipeline(store: Arc<SearchFixtureStore>) -> EvidencePipeline {
        EvidencePipeline::new(Arc::new(FixtureSearchProvider::new(store)), Arc::new(HashedBagOfWords::default()))
    }

    #[test]
    fn failing_step_is_isolated() {
        let store = store_with(&[
            ("Where do seals live?", vec![hit("a", "seals live on coasts"), hit("b", "unrelated text")]),
            ("Is it cold?", vec![hit("c", "it is cold in winter")]),
        ]);
        let e = Explanation::from_pairs(
            [("Where do seals live?", "x"), ("Not recorded?", "y"), ("Is it cold?", "z")],
            None,
        );
        let bundle = pipeline(store).build_evidence_bundle(&e);
        assert!(bundle.covers(3));
        assert_eq!(bundle.steps[0].evidence.len(), 2);
        assert!(bundle.steps[1].evidence.is_empty());
        assert!(bundle.steps[1].failure.as_deref().unwrap().contains("Not recorded?"));
        assert_eq!(bundle.steps[2].evidence[0].chunk.parent_url, "c");
    }

    #[test]
    fn singleton_bundle() {
        let store = store_with(&[("q?", vec![hit("only", "one short body")])]);
        let bundle = pipeline(store).build_evidence_bundle(&Explanation::from_pairs([("q?", "a")], None));
        assert_eq!(bundle.steps.len(), 1);
        assert_eq!(bundle.steps[0].evidence.len(), 1);
        assert_eq!(bundle.steps[0].evidence[0].display_rank, 1);
    }

    #[test]
    fn long_documents_are_chunked_before_ranking() {
        let long = (0..1000).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let store = store_with(&[("w3 w700", vec![hit("long", &long)])]);
        let ranked = pipeline(store).evidence_for_query("w3 w700").unwrap();
        assert_eq!(ranked.len(), 2);
        assert!(ranked.iter().all(|r| r.chunk.token_count <= MAX_CHUNK_TOKENS));
    }

    #[test]
    fn fanout_limit_gives_same_result() {
        let store = store_with(&[("a b", vec![hit("1", "a"), hit("2", "b b"), hit("3", "a b")])]);
        let e = Explanation::from_pairs([("a b", "x"), ("a b", "y")], None);
        let plain = pipeline(store.clone()).build_evidence_bundle(&e);
        let limited = pipeline(store.clone()).with_fanout_limit(1).build_evidence_bundle(&e);
        let seq = pipeline(store).with_execution(Execution::Sequential).build_evidence_bundle(&e);
        assert_eq!(plain, limited);
        assert_eq!(plain, seq);
    }

    #[test]
    fn low_ranked_falls_back_to_last() {
        let ranked = |n: u32| StepEvidence {
            step_index: 0,
            evidence: (1..=n)
                .map(|r| RankedEvidence {
                    chunk: DocumentChunk {
                        parent_url: format!("{r}"),
                        parent_title: String::new(),
                        retrieval_rank: r,
                        chunk_index: 0,
                        text: "t".into(),
                        token_count: 1,
                    },
                    similarity: 0.0,
                    display_rank: r,
                })
                .collect(),
            failure: None,
        };
        assert_eq!(ranked(25).low_ranked().unwrap().display_rank, 10);
        assert_eq!(ranked(4).low_ranked().unwrap().display_rank, 4);
        assert!(ranked(0).low_ranked().is_none());
    }
}
