use std::cmp::Ordering;

use super::embed::{cosine_similarity, Embedder};
use super::{DocumentChunk, EvidenceError, RankedEvidence};
use crate::exec::Execution;

/// Orders chunks by cosine similarity to the query, best first.
///
/// Ties fall back to `(retrieval_rank, chunk_index)` ascending. A chunk whose
/// embedding is the zero vector (no words) scores 0.0.
pub fn rerank(
    query: &str,
    chunks: Vec<DocumentChunk>,
    embedder: &dyn Embedder,
    execution: Execution,
) -> Result<Vec<RankedEvidence>, EvidenceError> {
    if chunks.is_empty() {
        return Err(EvidenceError::NoChunks);
    }
    let query_vec = embedder.embed(query)?;
    if query_vec.iter().all(|x| *x == 0.0) {
        return Err(EvidenceError::ZeroVector);
    }
    let scores = execution.map(&chunks, |chunk| -> Result<f64, EvidenceError> {
        let v = embedder.embed(&chunk.text)?;
        match cosine_similarity(&query_vec, &v) {
            Err(EvidenceError::ZeroVector) => Ok(0.0),
            other => other,
        }
    });
    let mut scored = chunks
        .into_iter()
        .zip(scores)
        .map(|(chunk, s)| s.map(|similarity| (chunk, similarity)))
        .collect::<Result<Vec<_>, _>>()?;
    scored.sort_by(|(a, sa), (b, sb)| compare(*sa, a, *sb, b));
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(i, (chunk, similarity))| RankedEvidence { chunk, similarity, display_rank: i as u32 + 1 })
        .collect())
}

fn compare(sa: f64, a: &DocumentChunk, sb: f64, b: &DocumentChunk) -> Ordering {
    sb.total_cmp(&sa).then(a.retrieval_rank.cmp(&b.retrieval_rank)).then(a.chunk_index.cmp(&b.chunk_index))
}
