use std::time::Duration;

use serde_json::{json, Value};

use super::RagError;

/// A unit-norm vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Normalizes `raw`; fails on an all-zero or non-finite vector.
    pub fn normalized(raw: &[f64]) -> Result<Self, RagError> {
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(RagError::ZeroVector);
        }
        Ok(Embedding(raw.iter().map(|x| x / norm).collect()))
    }

    /// Wraps values already known to be normalized (e.g. read back from disk).
    pub(crate) fn from_stored(values: Vec<f64>) -> Self {
        Embedding(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }
}

/// Dot product accumulated in index order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub trait Embedder: Send + Sync {
    /// Stable identifier recorded with persisted stores.
    fn id(&self) -> String;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Embedding, RagError>;
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic bag-of-words embedder: token counts feature-hashed into
/// `dimension` buckets, then L2-normalized.
#[derive(Debug, Clone)]
pub struct HashedEmbedder {
    dimension: usize,
}

impl HashedEmbedder {
    pub const DEFAULT_DIMENSION: usize = 256;

    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        HashedEmbedder { dimension }
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.dimension as u64) as usize
    }
}

impl Default for HashedEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIMENSION)
    }
}

impl Embedder for HashedEmbedder {
    fn id(&self) -> String {
        format!("hashed-bow-fnv1a-{}", self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Embedding, RagError> {
        let mut counts = vec![0.0f64; self.dimension];
        for tok in tokenize(text) {
            counts[self.bucket(&tok)] += 1.0;
        }
        Embedding::normalized(&counts)
    }
}

/// OpenAI-compatible `/v1/embeddings` client.
pub struct RemoteEmbedder {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    dimension: usize,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(base_url: &str, model: impl Into<String>, dimension: usize, api_key: Option<String>) -> Result<Self, RagError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| RagError::Embedder(e.to_string()))?;
        Ok(RemoteEmbedder {
            endpoint: format!("{}/v1/embeddings", base_url.trim_end_matches('/')),
            model: model.into(),
            api_key,
            dimension,
            client,
        })
    }
}

impl Embedder for RemoteEmbedder {
    fn id(&self) -> String {
        format!("remote-{}-{}", self.model, self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Embedding, RagError> {
        let mut req = self.client.post(&self.endpoint).json(&json!({"model": self.model, "input": text}));
        if let Some(k) = &self.api_key {
            req = req.bearer_auth(k);
        }
        let resp = req.send().map_err(|e| RagError::Embedder(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(RagError::Embedder(format!("HTTP {}", resp.status())));
        }
        let body: Value = resp.json().map_err(|e| RagError::Embedder(e.to_string()))?;
        let raw: Vec<f64> = body["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| RagError::Embedder("response has no data[0].embedding".into()))?
            .iter()
            .map(|v| v.as_f64().ok_or_else(|| RagError::Embedder("non-numeric embedding".into())))
            .collect::<Result<_, _>>()?;
        if raw.len() != self.dimension {
            return Err(RagError::DimensionMismatch {
                expected: self.dimension,
                found: raw.len(),
            });
        }
        Embedding::normalized(&raw)
    }
}
