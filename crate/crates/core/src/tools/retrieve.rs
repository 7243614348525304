use std::sync::Arc;

use serde_json::{Map, Value};

use super::{string_arg, ParamType, Tool, ToolError, ToolSignature};
use crate::rag::{format_chunks, Collection, Embedder, VectorStore};

/// Local knowledge-base lookup.
pub struct RetrieveTool {
    signature: ToolSignature,
    store: Arc<VectorStore>,
    embedder: Arc<dyn Embedder>,
    default_k: usize,
    collections: Vec<Collection>,
}

impl RetrieveTool {
    pub const NAME: &'static str = "retrieve";
    const MAX_K: usize = 20;

    pub fn new(store: Arc<VectorStore>, embedder: Arc<dyn Embedder>, default_k: usize) -> Self {
        RetrieveTool {
            signature: ToolSignature::new(Self::NAME, "Look up passages in the local reference knowledge base.")
                .param("query", ParamType::String, "What to look for.")
                .optional("k", ParamType::Integer, "Number of passages (default 5)."),
            store,
            embedder,
            default_k: default_k.max(1),
            collections: Vec::new(),
        }
    }

    pub fn restricted_to(mut self, collections: Vec<Collection>) -> Self {
        self.collections = collections;
        self
    }
}

impl Tool for RetrieveTool {
    fn signature(&self) -> &ToolSignature {
        &self.signature
    }

    fn call(&self, args: &Map<String, Value>) -> Result<String, ToolError> {
        let query = string_arg(args, "query")?;
        let k = match args.get("k").and_then(Value::as_u64) {
            Some(0) => return Err(ToolError::BadArguments("k must be at least 1".into())),
            Some(k) => (k as usize).min(Self::MAX_K),
            None => self.default_k,
        };
        let hits = self
            .store
            .query(self.embedder.as_ref(), query, k, &self.collections)
            .map_err(|e| ToolError::Failed(e.to_string()))?;
        Ok(format_chunks(&hits))
    }
}
