//! Actions available to agents.
//!
//! Every tool is total from the agent's point of view: failures come back
//! as `TOOL ERROR:` observations instead of aborting the loop.

mod exec;
mod retrieve;
mod search;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

pub use exec::{exec_code, ExecConfig, ExecError, ExecResult, PythonRunTool, OUTPUT_CAP_BYTES};
pub use retrieve::RetrieveTool;
pub use search::{
    format_results, search_web, FixtureSearch, HttpSearch, SearchError, SearchOutcome, SearchProvider, SearchResult,
    SearchWebTool,
};

pub const THOUGHT_TOOL: &str = "Thought";
pub const TOOL_ERROR_PREFIX: &str = "TOOL ERROR:";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ToolError {
    #[error("a tool named `{0}` is already registered")]
    DuplicateName(String),
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("bad arguments: {0}")]
    BadArguments(String),
    #[error("{0}")]
    Failed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    String,
    Integer,
    Number,
    Boolean,
    StringArray,
    Object,
    ObjectArray,
}

impl ParamType {
    fn json_schema(self) -> Value {
        match self {
            ParamType::String => json!({"type": "string"}),
            ParamType::Integer => json!({"type": "integer"}),
            ParamType::Number => json!({"type": "number"}),
            ParamType::Boolean => json!({"type": "boolean"}),
            ParamType::StringArray => json!({"type": "array", "items": {"type": "string"}}),
            ParamType::Object => json!({"type": "object"}),
            ParamType::ObjectArray => json!({"type": "array", "items": {"type": "object"}}),
        }
    }

    fn accepts(self, v: &Value) -> bool {
        match self {
            ParamType::String => v.is_string(),
            ParamType::Integer => v.is_i64() || v.is_u64(),
            ParamType::Number => v.is_number(),
            ParamType::Boolean => v.is_boolean(),
            ParamType::StringArray => v.as_array().is_some_and(|a| a.iter().all(Value::is_string)),
            ParamType::Object => v.is_object(),
            ParamType::ObjectArray => v.as_array().is_some_and(|a| a.iter().all(Value::is_object)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    #[serde(rename = "type")]
    pub type_tag: ParamType,
    pub description: String,
    #[serde(default = "yes")]
    pub required: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSignature {
    pub name: String,
    pub description: String,
    pub parameters: BTreeMap<String, ParamSpec>,
}

impl ToolSignature {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        ToolSignature {
            name: name.into(),
            description: description.into(),
            parameters: BTreeMap::new(),
        }
    }

    pub fn param(mut self, name: &str, type_tag: ParamType, description: &str) -> Self {
        self.parameters.insert(
            name.to_string(),
            ParamSpec {
                type_tag,
                description: description.to_string(),
                required: true,
            },
        );
        self
    }

    pub fn optional(mut self, name: &str, type_tag: ParamType, description: &str) -> Self {
        self.parameters.insert(
            name.to_string(),
            ParamSpec {
                type_tag,
                description: description.to_string(),
                required: false,
            },
        );
        self
    }

    /// Function-tool entry for a chat-completion request.
    pub fn to_openai_json(&self) -> Value {
        let mut props = Map::new();
        let mut required = Vec::new();
        for (name, p) in &self.parameters {
            let mut schema = p.type_tag.json_schema();
            schema["description"] = Value::String(p.description.clone());
            props.insert(name.clone(), schema);
            if p.required {
                required.push(Value::String(name.clone()));
            }
        }
        json!({
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": {"type": "object", "properties": props, "required": required},
            }
        })
    }

    /// Checks presence and type of every declared parameter.
    pub fn check_arguments(&self, args: &Map<String, Value>) -> Result<(), ToolError> {
        for (name, p) in &self.parameters {
            match args.get(name) {
                None | Some(Value::Null) if p.required => {
                    return Err(ToolError::BadArguments(format!("missing argument `{name}`")))
                }
                None | Some(Value::Null) => {}
                Some(v) if !p.type_tag.accepts(v) => {
                    return Err(ToolError::BadArguments(format!(
                        "argument `{name}` must be {:?}",
                        p.type_tag
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

/// An action an agent can take.
pub trait Tool: Send + Sync {
    fn signature(&self) -> &ToolSignature;
    fn call(&self, args: &Map<String, Value>) -> Result<String, ToolError>;
}

struct FnTool<F> {
    signature: ToolSignature,
    f: F,
}

impl<F> Tool for FnTool<F>
where
    F: Fn(&Map<String, Value>) -> Result<String, ToolError> + Send + Sync,
{
    fn signature(&self) -> &ToolSignature {
        &self.signature
    }

    fn call(&self, args: &Map<String, Value>) -> Result<String, ToolError> {
        (self.f)(args)
    }
}

/// The chain-of-thought action: its observation is the thought itself.
pub struct ThoughtTool {
    signature: ToolSignature,
}

impl ThoughtTool {
    pub fn new() -> Self {
        ThoughtTool {
            signature: ToolSignature::new(
                THOUGHT_TOOL,
                "Think step by step before acting. This is the only way to think.",
            )
            .param("thought", ParamType::String, "Your reasoning."),
        }
    }
}

impl Default for ThoughtTool {
    fn default() -> Self {
        Self::new()
    }
}

impl Tool for ThoughtTool {
    fn signature(&self) -> &ToolSignature {
        &self.signature
    }

    fn call(&self, args: &Map<String, Value>) -> Result<String, ToolError> {
        Ok(string_arg(args, "thought")?.to_string())
    }
}

pub(crate) fn string_arg<'a>(args: &'a Map<String, Value>, name: &str) -> Result<&'a str, ToolError> {
    args.get(name)
        .and_then(Value::as_str)
        .ok_or_else(|| ToolError::BadArguments(format!("missing string argument `{name}`")))
}

/// Named tools, shared between agent runs.
#[derive(Clone, Default)]
pub struct ToolRegistry {
    tools: BTreeMap<String, Arc<dyn Tool>>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, tool: Arc<dyn Tool>) -> Result<(), ToolError> {
        let name = tool.signature().name.clone();
        if self.tools.contains_key(&name) {
            return Err(ToolError::DuplicateName(name));
        }
        self.tools.insert(name, tool);
        Ok(())
    }

    pub fn register_fn<F>(&mut self, signature: ToolSignature, f: F) -> Result<(), ToolError>
    where
        F: Fn(&Map<String, Value>) -> Result<String, ToolError> + Send + Sync + 'static,
    {
        self.register(Arc::new(FnTool { signature, f }))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tools.contains_key(name)
    }

    pub fn signature(&self, name: &str) -> Option<&ToolSignature> {
        self.tools.get(name).map(|t| t.signature())
    }

    /// Runs a tool by name, validating its arguments first.
    pub fn call(&self, name: &str, args: &Map<String, Value>) -> Result<String, ToolError> {
        let tool = self.tools.get(name).ok_or_else(|| ToolError::UnknownTool(name.to_string()))?;
        tool.signature().check_arguments(args)?;
        tool.call(args)
    }

    /// Like [`ToolRegistry::call`], but every failure becomes observation text.
    pub fn dispatch(&self, name: &str, args: &Map<String, Value>) -> String {
        match self.call(name, args) {
            Ok(out) => out,
            Err(e) => format!("{TOOL_ERROR_PREFIX} {e}"),
        }
    }
}
