//! `config.yaml`: everything about a workspace that is not its objectives.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use synthforge_core::checks::ToolHook;
use synthforge_core::gateway::{ModelParams, ModelRoster};
use synthforge_core::rag::ChunkingConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkspaceConfig {
    pub models: ModelsConfig,
    /// Prompt template overrides, relative to the workspace.
    pub templates: PathBuf,
    pub tools: ToolsConfig,
    pub caps: CapsConfig,
    pub rag: RagConfig,
    pub checks: ChecksConfig,
    pub trials: usize,
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        WorkspaceConfig {
            models: ModelsConfig::default(),
            templates: PathBuf::from("templates"),
            tools: ToolsConfig::default(),
            caps: CapsConfig::default(),
            rag: RagConfig::default(),
            checks: ChecksConfig::default(),
            trials: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelsConfig {
    /// Server root of an OpenAI-compatible API.
    pub endpoint: String,
    pub generator: ModelParams,
    pub evaluator: ModelParams,
    pub timeout_s: u64,
    pub max_attempts: u32,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        let roster = ModelRoster::default();
        ModelsConfig {
            endpoint: "https://api.openai.com".into(),
            generator: roster.generator,
            evaluator: roster.evaluator,
            timeout_s: 300,
            max_attempts: 3,
        }
    }
}

impl ModelsConfig {
    pub fn roster(&self) -> ModelRoster {
        ModelRoster { generator: self.generator.clone(), evaluator: self.evaluator.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToolsConfig {
    /// Interpreter command for `python_run`; the script path is appended.
    pub interpreter: Vec<String>,
    pub exec_timeout_s: f64,
    pub search: SearchConfig,
    pub max_search_results: usize,
    /// Extra tools offered to module designers besides `Thought`.
    pub module_tools: Vec<String>,
}

impl Default for ToolsConfig {
    fn default() -> Self {
        ToolsConfig {
            interpreter: vec!["python3".into()],
            exec_timeout_s: 30.0,
            search: SearchConfig::None {},
            max_search_results: 5,
            module_tools: vec!["search_web".into(), "python_run".into(), "retrieve".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "snake_case", deny_unknown_fields)]
pub enum SearchConfig {
    /// Searches return nothing.
    None {},
    /// Canned results: `*.json` files mapping query to results.
    Fixture { dir: PathBuf },
    Http { endpoint: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CapsConfig {
    /// Evaluations per research question.
    pub knowledge_eval: usize,
    pub design_eval: usize,
    pub final_eval: usize,
    pub max_modules: usize,
}

impl Default for CapsConfig {
    fn default() -> Self {
        CapsConfig { knowledge_eval: 5, design_eval: 3, final_eval: 3, max_modules: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RagConfig {
    pub chunk_size_chars: usize,
    pub overlap_chars: usize,
    pub retrieve_k: usize,
    pub insufficient_score: f64,
    pub dimension: usize,
    pub embedder: EmbedderConfig,
}

impl Default for RagConfig {
    fn default() -> Self {
        let c = ChunkingConfig::default();
        RagConfig {
            chunk_size_chars: c.chunk_size_chars,
            overlap_chars: c.overlap_chars,
            retrieve_k: 5,
            insufficient_score: synthforge_core::rag::INSUFFICIENT_SCORE,
            dimension: 256,
            embedder: EmbedderConfig::Hashed {},
        }
    }
}

impl RagConfig {
    pub fn chunking(&self) -> ChunkingConfig {
        ChunkingConfig { chunk_size_chars: self.chunk_size_chars, overlap_chars: self.overlap_chars }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbedderConfig {
    /// Local feature-hashing embedder.
    Hashed {},
    /// OpenAI-compatible `/v1/embeddings` endpoint.
    Remote { endpoint: String, model: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksConfig {
    /// Overrides the keyword test on the objectives when set.
    pub optimization_requested: Option<bool>,
    pub syntax_hook: Option<ToolHook>,
    pub synth_hook: Option<ToolHook>,
}

impl WorkspaceConfig {
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        let c: WorkspaceConfig = serde_yaml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.models.roster().validate()?;
        self.rag.chunking().validate()?;
        anyhow::ensure!(self.trials >= 1, "trials must be at least 1");
        anyhow::ensure!(!self.tools.interpreter.is_empty(), "tools.interpreter must not be empty");
        anyhow::ensure!(self.rag.dimension >= 1, "rag.dimension must be at least 1");
        anyhow::ensure!(self.rag.retrieve_k >= 1, "rag.retrieve_k must be at least 1");
        for h in [&self.checks.syntax_hook, &self.checks.synth_hook].into_iter().flatten() {
            h.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = WorkspaceConfig::default();
        assert_eq!(WorkspaceConfig::parse(&c.to_yaml()).unwrap(), c);
        assert_eq!(WorkspaceConfig::parse("").unwrap(), c);
        assert_eq!(c.trials, 5);
    }

    #[test]
    fn unknown_keys_are_named() {
        for (yaml, key) in [
            ("trails: 3\n", "trails"),
            ("models:\n  endpont: x\n", "endpont"),
            ("rag:\n  embedder:\n    kind: hashed\n    size: 3\n", "size"),
            ("tools:\n  search:\n    provider: fixture\n    dir: s\n    extra: 1\n", "extra"),
        ] {
            let e = format!("{:#}", WorkspaceConfig::parse(yaml).unwrap_err());
            assert!(e.contains(key), "{yaml}: {e}");
        }
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let c = WorkspaceConfig::parse(
            "trials: 2\ntools:\n  search:\n    provider: fixture\n    dir: knowledge/search\nchecks:\n  syntax_hook:\n    command: [g++, -fsyntax-only, '{file}']\n",
        )
        .unwrap();
        assert_eq!(c.trials, 2);
        assert_eq!(c.tools.search, SearchConfig::Fixture { dir: "knowledge/search".into() });
        assert_eq!(c.tools.interpreter, vec!["python3"]);
        assert_eq!(c.checks.syntax_hook.unwrap().command[0], "g++");
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(WorkspaceConfig::parse("trials: 0\n").is_err());
        assert!(WorkspaceConfig::parse("rag:\n  chunk_size_chars: 10\n  overlap_chars: 10\n").is_err());
        assert!(WorkspaceConfig::parse("models:\n  generator:\n    model: ''\n").is_err());
    }
}
