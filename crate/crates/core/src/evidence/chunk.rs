use std::ops::Range;

use super::{DocumentChunk, EvidenceDocument, EvidenceError};

/// Upper bound on tokens per chunk accepted by the reranker.
pub const MAX_CHUNK_TOKENS: usize = 512;

/// Splits text into tokens, reported as byte ranges into the input.
pub trait Tokenizer: Send + Sync {
    fn token_spans(&self, text: &str) -> Vec<Range<usize>>;

    fn count(&self, text: &str) -> usize {
        self.token_spans(text).len()
    }
}

/// A token is a maximal run of non-whitespace characters.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn token_spans(&self, text: &str) -> Vec<Range<usize>> {
        let mut spans = Vec::new();
        let mut start = None;
        for (i, c) in text.char_indices() {
            match (c.is_whitespace(), start) {
                (true, Some(s)) => {
                    spans.push(s..i);
                    start = None;
                }
                (false, None) => start = Some(i),
                _ => {}
            }
        }
        if let Some(s) = start {
            spans.push(s..text.len());
        }
        spans
    }
}

pub(crate) fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn chunk_document(doc: &EvidenceDocument, max_tokens: usize) -> Result<Vec<DocumentChunk>, EvidenceError> {
    chunk_document_with(doc, max_tokens, &WhitespaceTokenizer)
}

/// Greedy split into consecutive runs of at most `max_tokens` tokens, no
/// overlap. Chunk text is the covered slice of the body with whitespace runs
/// collapsed to single spaces.
pub fn chunk_document_with(
    doc: &EvidenceDocument,
    max_tokens: usize,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<DocumentChunk>, EvidenceError> {
    if max_tokens == 0 {
        return Err(EvidenceError::InvalidChunkSize);
    }
    let spans = tokenizer.token_spans(&doc.body);
    if spans.is_empty() {
        return Err(EvidenceError::EmptyDocument(doc.url.clone()));
    }
    Ok(spans
        .chunks(max_tokens)
        .enumerate()
        .map(|(chunk_index, group)| {
            let start = group[0].start;
            let end = group[group.len() - 1].end;
            DocumentChunk {
                parent_url: doc.url.clone(),
                parent_title: doc.title.clone(),
                retrieval_rank: doc.retrieval_rank,
                chunk_index,
                text: normalize_whitespace(&doc.body[start..end]),
                token_count: group.len(),
            }
        })
        .collect())
}
