//! On-disk layout: `meta.json`, `chunks.jsonl` (one chunk per line, in
//! index order) and `vectors.bin` (little-endian f64 rows).

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChunkingConfig, DocumentChunk, RagError, VectorStore};

const FORMAT_VERSION: u32 = 2;
const NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreMeta {
    pub format_version: u32,
    pub embedder_id: String,
    pub dimension: usize,
    pub chunking: ChunkingConfig,
    pub chunk_count: usize,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RagError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| RagError::Io(e.to_string()))?;
    tmp.write_all(bytes).map_err(|e| RagError::Io(e.to_string()))?;
    tmp.persist(path).map_err(|e| RagError::Io(e.to_string()))?;
    Ok(())
}

fn read(path: &Path) -> Result<Vec<u8>, RagError> {
    std::fs::read(path).map_err(|e| RagError::Io(format!("{}: {e}", path.display())))
}

impl VectorStore {
    pub fn meta(&self) -> StoreMeta {
        StoreMeta {
            format_version: FORMAT_VERSION,
            embedder_id: self.embedder_id.clone(),
            dimension: self.dimension,
            chunking: self.chunking,
            chunk_count: self.chunks.len(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), RagError> {
        std::fs::create_dir_all(dir).map_err(|e| RagError::Io(e.to_string()))?;
        let mut lines = String::new();
        for c in &self.chunks {
            lines.push_str(&serde_json::to_string(c).map_err(|e| RagError::Format(e.to_string()))?);
            lines.push('\n');
        }
        let mut bin = Vec::with_capacity(self.vectors.len() * 8);
        for v in &self.vectors {
            bin.extend_from_slice(&v.to_le_bytes());
        }
        let meta = serde_json::to_vec_pretty(&self.meta()).map_err(|e| RagError::Format(e.to_string()))?;
        write_atomic(&dir.join("chunks.jsonl"), lines.as_bytes())?;
        write_atomic(&dir.join("vectors.bin"), &bin)?;
        // meta last: a reader that sees it sees matching companions
        write_atomic(&dir.join("meta.json"), &meta)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, RagError> {
        let meta = read(&dir.join("meta.json"))?;
        let chunks = read(&dir.join("chunks.jsonl"))?;
        let vectors = read(&dir.join("vectors.bin"))?;
        parse_store(&meta, &chunks, &vectors)
    }
}

/// Decodes and validates the three store files.
pub fn parse_store(meta: &[u8], chunks: &[u8], vectors: &[u8]) -> Result<VectorStore, RagError> {
    let meta: StoreMeta = serde_json::from_slice(meta).map_err(|e| RagError::Format(format!("meta.json: {e}")))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(RagError::Format(format!("unsupported format version {}", meta.format_version)));
    }
    if meta.dimension == 0 {
        return Err(RagError::Format("dimension must be positive".into()));
    }
    meta.chunking.validate()?;
    let text = std::str::from_utf8(chunks).map_err(|e| RagError::Format(format!("chunks.jsonl: {e}")))?;
    let mut parsed = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let c: DocumentChunk =
            serde_json::from_str(line).map_err(|e| RagError::Format(format!("chunks.jsonl line {}: {e}", i + 1)))?;
        let n = c.text.chars().count();
        if n == 0 || n > meta.chunking.chunk_size_chars {
            return Err(RagError::Format(format!("chunk {}#{} has length {n}", c.doc_id, c.chunk_index)));
        }
        if !seen.insert((c.doc_id.clone(), c.chunk_index)) {
            return Err(RagError::Format(format!("duplicate chunk {}#{}", c.doc_id, c.chunk_index)));
        }
        parsed.push(c);
    }
    if parsed.len() != meta.chunk_count {
        return Err(RagError::Format(format!(
            "meta says {} chunks, chunks.jsonl has {}",
            meta.chunk_count,
            parsed.len()
        )));
    }
    let expected = parsed
        .len()
        .checked_mul(meta.dimension)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| RagError::Format("store too large".into()))?;
    if vectors.len() != expected {
        return Err(RagError::Format(format!(
            "vectors.bin has {} bytes, expected {expected}",
            vectors.len()
        )));
    }
    let values: Vec<f64> = vectors
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    for (i, row) in values.chunks(meta.dimension).enumerate() {
        let norm = super::Embedding::from_stored(row.to_vec()).norm();
        if !((norm - 1.0).abs() <= NORM_TOLERANCE) {
            return Err(RagError::Format(format!("vector {i} has norm {norm}")));
        }
    }
    Ok(VectorStore {
        embedder_id: meta.embedder_id,
        dimension: meta.dimension,
        chunking: meta.chunking,
        chunks: parsed,
        vectors: values,
    })
}
