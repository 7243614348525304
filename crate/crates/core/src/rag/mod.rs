//! Exact-search vector store over chunked reference documents.

mod embed;
mod persist;

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embed::{dot, fnv1a, tokenize, Embedder, Embedding, HashedEmbedder, RemoteEmbedder};
pub use persist::{parse_store, StoreMeta};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RagError {
    #[error("text has no tokens to embed")]
    ZeroVector,
    #[error("embedder failure: {0}")]
    Embedder(String),
    #[error("embedding dimension {found} does not match store dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("document `{0}` is already in the store")]
    DuplicateDocument(String),
    #[error("invalid chunking: chunk size {size}, overlap {overlap}")]
    BadChunking { size: usize, overlap: usize },
    #[error("k must be at least 1")]
    BadK,
    #[error("store format error: {0}")]
    Format(String),
    #[error("store I/O error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Collection {
    Project,
    Generic,
    LanguageManuals,
}

impl Collection {
    pub const ALL: [Collection; 3] = [Collection::Project, Collection::Generic, Collection::LanguageManuals];

    pub fn as_str(self) -> &'static str {
        match self {
            Collection::Project => "project",
            Collection::Generic => "generic",
            Collection::LanguageManuals => "language_manuals",
        }
    }
}

impl fmt::Display for Collection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentChunk {
    pub doc_id: String,
    pub chunk_index: usize,
    pub text: String,
    pub source_collection: Collection,
}

impl DocumentChunk {
    pub fn locator(&self) -> String {
        format!("kb://{}/{}#{}", self.source_collection, self.doc_id, self.chunk_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk: DocumentChunk,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingConfig {
    pub chunk_size_chars: usize,
    pub overlap_chars: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        ChunkingConfig {
            chunk_size_chars: 1000,
            overlap_chars: 200,
        }
    }
}

impl ChunkingConfig {
    pub fn validate(&self) -> Result<(), RagError> {
        if self.chunk_size_chars == 0 || self.overlap_chars >= self.chunk_size_chars {
            return Err(RagError::BadChunking {
                size: self.chunk_size_chars,
                overlap: self.overlap_chars,
            });
        }
        Ok(())
    }
}

/// Windows of `chunk_size` chars starting every `chunk_size - overlap` chars,
/// for every start offset inside the text. Returns `(char offset, text)`.
pub fn chunk_text(text: &str, cfg: &ChunkingConfig) -> Result<Vec<(usize, String)>, RagError> {
    cfg.validate()?;
    let chars: Vec<char> = text.chars().collect();
    let stride = cfg.chunk_size_chars - cfg.overlap_chars;
    let mut out = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let end = (start + cfg.chunk_size_chars).min(chars.len());
        out.push((start, chars[start..end].iter().collect()));
        start += stride;
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestSummary {
    pub chunks: usize,
    pub skipped_empty: Vec<String>,
}

/// Top-1 score below which local retrieval counts as insufficient.
pub const INSUFFICIENT_SCORE: f64 = 0.25;

/// True when retrieval found fewer than `k` chunks or its best score is
/// below `threshold`.
pub fn is_insufficient(results: &[ScoredChunk], k: usize, threshold: f64) -> bool {
    results.len() < k || results.first().map_or(true, |r| r.score < threshold)
}

/// Granularity of reported scores. Cosines that agree to within rounding
/// noise land on the same step, so equal similarities tie exactly.
pub const SCORE_STEPS: f64 = 1e9;

pub fn snap_score(s: f64) -> f64 {
    (s * SCORE_STEPS).round() / SCORE_STEPS
}

/// Ranking order: score descending, then `(doc_id, chunk_index)` ascending.
pub fn rank_order(a: (f64, &DocumentChunk), b: (f64, &DocumentChunk)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.1.doc_id.cmp(&b.1.doc_id))
        .then_with(|| a.1.chunk_index.cmp(&b.1.chunk_index))
}

/// Heap entry ordered so the worst-ranked candidate is the heap maximum.
struct Candidate<'a> {
    score: f64,
    chunk: &'a DocumentChunk,
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate<'_> {}
impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        rank_order((self.score, self.chunk), (other.score, other.chunk))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    pub(crate) embedder_id: String,
    pub(crate) dimension: usize,
    pub(crate) chunking: ChunkingConfig,
    pub(crate) chunks: Vec<DocumentChunk>,
    pub(crate) vectors: Vec<f64>,
}

impl VectorStore {
    pub fn new(embedder: &dyn Embedder, chunking: ChunkingConfig) -> Result<Self, RagError> {
        chunking.validate()?;
        Ok(VectorStore {
            embedder_id: embedder.id(),
            dimension: embedder.dimension(),
            chunking,
            chunks: Vec::new(),
            vectors: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn chunks(&self) -> &[DocumentChunk] {
        &self.chunks
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dimension..(i + 1) * self.dimension]
    }

    /// Chunks, embeds and indexes documents. Either every chunk is added or,
    /// on an embedder failure, none is.
    pub fn ingest(
        &mut self,
        embedder: &dyn Embedder,
        collection: Collection,
        documents: &[(String, String)],
    ) -> Result<IngestSummary, RagError> {
        if embedder.dimension() != self.dimension {
            return Err(RagError::DimensionMismatch {
                expected: self.dimension,
                found: embedder.dimension(),
            });
        }
        let existing: BTreeSet<&str> = self.chunks.iter().map(|c| c.doc_id.as_str()).collect();
        let mut batch_ids = BTreeSet::new();
        let mut new_chunks = Vec::new();
        let mut new_vectors = Vec::new();
        let mut summary = IngestSummary::default();
        for (doc_id, text) in documents {
            if existing.contains(doc_id.as_str()) || !batch_ids.insert(doc_id.as_str()) {
                return Err(RagError::DuplicateDocument(doc_id.clone()));
            }
            if text.trim().is_empty() {
                log::warn!("skipping empty document `{doc_id}`");
                summary.skipped_empty.push(doc_id.clone());
                continue;
            }
            for (chunk_index, (_, piece)) in chunk_text(text, &self.chunking)?.into_iter().enumerate() {
                let v = match embedder.embed(&piece) {
                    Ok(v) => v,
                    // Punctuation-only windows carry no tokens; they are not retrievable anyway.
                    Err(RagError::ZeroVector) => continue,
                    Err(e) => return Err(e),
                };
                if v.dimension() != self.dimension {
                    return Err(RagError::DimensionMismatch {
                        expected: self.dimension,
                        found: v.dimension(),
                    });
                }
                new_vectors.extend_from_slice(v.values());
                new_chunks.push(DocumentChunk {
                    doc_id: doc_id.clone(),
                    chunk_index,
                    text: piece,
                    source_collection: collection,
                });
            }
        }
        summary.chunks = new_chunks.len();
        self.chunks.extend(new_chunks);
        self.vectors.extend(new_vectors);
        Ok(summary)
    }

    /// The `k` best chunks for a query vector within `collections`
    /// (all collections when empty).
    pub fn query_vector(
        &self,
        query: &Embedding,
        k: usize,
        collections: &[Collection],
    ) -> Result<Vec<ScoredChunk>, RagError> {
        if k == 0 {
            return Err(RagError::BadK);
        }
        if query.dimension() != self.dimension {
            return Err(RagError::DimensionMismatch {
                expected: self.dimension,
                found: query.dimension(),
            });
        }
        let mut heap: BinaryHeap<Candidate<'_>> = BinaryHeap::with_capacity(k + 1);
        for (i, chunk) in self.chunks.iter().enumerate() {
            if !collections.is_empty() && !collections.contains(&chunk.source_collection) {
                continue;
            }
            let cand = Candidate {
                score: snap_score(query.dot(self.vector(i))),
                chunk,
            };
            if heap.len() < k {
                heap.push(cand);
            } else if heap.peek().is_some_and(|worst| cand < *worst) {
                heap.pop();
                heap.push(cand);
            }
        }
        Ok(heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| ScoredChunk {
                chunk: c.chunk.clone(),
                score: c.score,
            })
            .collect())
    }

    pub fn query(
        &self,
        embedder: &dyn Embedder,
        text: &str,
        k: usize,
        collections: &[Collection],
    ) -> Result<Vec<ScoredChunk>, RagError> {
        if k == 0 {
            return Err(RagError::BadK);
        }
        if self.is_empty() {
            return Ok(Vec::new());
        }
        let q = match embedder.embed(text) {
            Ok(q) => q,
            Err(RagError::ZeroVector) => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        self.query_vector(&q, k, collections)
    }
}

/// Observation text for retrieved chunks.
pub fn format_chunks(results: &[ScoredChunk]) -> String {
    if results.is_empty() {
        return "No matching reference material.".to_string();
    }
    results
        .iter()
        .enumerate()
        .map(|(i, r)| format!("[{}] {} (score {:.3})\n{}", i + 1, r.chunk.locator(), r.score, r.chunk.text))
        .collect::<Vec<_>>()
        .join("\n\n")
}
