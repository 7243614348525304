use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::{string_arg, ParamType, Tool, ToolError, ToolSignature};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub title: String,
    pub snippet: String,
    pub locator: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SearchError {
    #[error("search transport error: {0}")]
    Transport(String),
    #[error("search quota exhausted: {0}")]
    Quota(String),
    #[error("no fixture for query `{0}`")]
    UnknownKey(String),
    #[error("fixture error: {0}")]
    Fixture(String),
}

pub trait SearchProvider: Send + Sync {
    fn search(&self, query: &str, max_results: usize) -> Result<Vec<SearchResult>, SearchError>;
}

fn normalize_key(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Canned results keyed by query text, read from `*.json` files that each
/// hold an object of `query -> [result, ...]`.
#[derive(Debug, Clone, Default)]
pub struct FixtureSearch {
    entries: BTreeMap<String, Vec<SearchResult>>,
}

impl FixtureSearch {
    pub fn new(entries: BTreeMap<String, Vec<SearchResult>>) -> Self {
        FixtureSearch {
            entries: entries.into_iter().map(|(k, v)| (normalize_key(&k), v)).collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SearchError> {
        let map: BTreeMap<String, Vec<SearchResult>> =
            serde_json::from_str(text).map_err(|e| SearchError::Fixture(e.to_string()))?;
        for (k, results) in &map {
            if let Some(r) = results.iter().find(|r| r.locator.trim().is_empty()) {
                return Err(SearchError::Fixture(format!("result `{}` for `{k}` has no locator", r.title)));
            }
        }
        Ok(Self::new(map))
    }

    /// Merges every `*.json` file in `dir`, in file-name order.
    pub fn load_dir(dir: &Path) -> Result<Self, SearchError> {
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| SearchError::Fixture(format!("{}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        let mut entries = BTreeMap::new();
        for f in files {
            let text = std::fs::read_to_string(&f).map_err(|e| SearchError::Fixture(format!("{}: {e}", f.display())))?;
            entries.extend(Self::from_json(&text)?.entries);
        }
        Ok(FixtureSearch { entries })
    }
}

impl SearchProvider for FixtureSearch {
    fn search(&self, query: &str, max_results: usize) -> Result<Vec<SearchResult>, SearchError> {
        let results = self
            .entries
            .get(&normalize_key(query))
            .ok_or_else(|| SearchError::UnknownKey(query.to_string()))?;
        Ok(results.iter().take(max_results).cloned().collect())
    }
}

/// Adapter for a JSON search API: `GET <endpoint>?q=<query>&count=<n>`
/// answering `{"results": [{"title", "snippet", "url"}]}`.
pub struct HttpSearch {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpSearch {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Result<Self, SearchError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| SearchError::Transport(e.to_string()))?;
        Ok(HttpSearch {
            endpoint: endpoint.into(),
            api_key,
            client,
        })
    }
}

impl SearchProvider for HttpSearch {
    fn search(&self, query: &str, max_results: usize) -> Result<Vec<SearchResult>, SearchError> {
        let mut req = self
            .client
            .get(&self.endpoint)
            .query(&[("q", query), ("count", &max_results.to_string())]);
        if let Some(k) = &self.api_key {
            req = req.bearer_auth(k);
        }
        let resp = req.send().map_err(|e| SearchError::Transport(e.to_string()))?;
        if resp.status().as_u16() == 429 {
            return Err(SearchError::Quota(resp.text().unwrap_or_default()));
        }
        if !resp.status().is_success() {
            return Err(SearchError::Transport(format!("HTTP {}", resp.status())));
        }
        let body: Value = resp.json().map_err(|e| SearchError::Transport(e.to_string()))?;
        let results = body
            .get("results")
            .and_then(Value::as_array)
            .map(|items| {
                items
                    .iter()
                    .filter_map(|it| {
                        let s = |k: &str| it.get(k).and_then(Value::as_str).unwrap_or("").to_string();
                        let locator = [s("url"), s("link"), s("locator")].into_iter().find(|x| !x.is_empty())?;
                        let snippet = [s("snippet"), s("description"), s("content")]
                            .into_iter()
                            .find(|x| !x.is_empty())
                            .unwrap_or_default();
                        Some(SearchResult {
                            title: s("title"),
                            snippet,
                            locator,
                        })
                    })
                    .take(max_results)
                    .collect()
            })
            .unwrap_or_default();
        Ok(results)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchOutcome {
    pub results: Vec<SearchResult>,
    pub warning: Option<String>,
}

/// Runs a search; provider failures yield no results plus a warning.
pub fn search_web(provider: &dyn SearchProvider, query: &str, max_results: usize) -> SearchOutcome {
    match provider.search(query, max_results.max(1)) {
        Ok(mut results) => {
            results.truncate(max_results.max(1));
            SearchOutcome { results, warning: None }
        }
        Err(e) => SearchOutcome {
            results: Vec::new(),
            warning: Some(e.to_string()),
        },
    }
}

/// Observation text for a set of results.
pub fn format_results(outcome: &SearchOutcome) -> String {
    let mut s = String::new();
    if let Some(w) = &outcome.warning {
        s.push_str("WARNING: ");
        s.push_str(w);
        s.push('\n');
    }
    if outcome.results.is_empty() {
        s.push_str("No results.");
        return s;
    }
    for (i, r) in outcome.results.iter().enumerate() {
        if i > 0 {
            s.push('\n');
        }
        s.push_str(&format!("{}. {}\n   {}\n   {}", i + 1, r.title, r.locator, r.snippet));
    }
    s
}

pub struct SearchWebTool {
    signature: ToolSignature,
    provider: Arc<dyn SearchProvider>,
    max_results: usize,
}

impl SearchWebTool {
    pub const NAME: &'static str = "search_web";

    pub fn new(provider: Arc<dyn SearchProvider>, max_results: usize) -> Self {
        SearchWebTool {
            signature: ToolSignature::new(Self::NAME, "Search the web for documentation, syntax or algorithms.")
                .param("query", ParamType::String, "Search query."),
            provider,
            max_results,
        }
    }
}

impl Tool for SearchWebTool {
    fn signature(&self) -> &ToolSignature {
        &self.signature
    }

    fn call(&self, args: &Map<String, Value>) -> Result<String, ToolError> {
        let q = string_arg(args, "query")?;
        Ok(format_results(&search_web(self.provider.as_ref(), q, self.max_results)))
    }
}
