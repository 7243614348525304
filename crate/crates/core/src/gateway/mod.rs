//! Uniform completion interface over interchangeable backends.
//!
//! - [`OpenAiBackend`]: live HTTP chat completions.
//! - [`ScriptedBackend`]: canned responses, in order.
//! - [`ReplayBackend`]: a recorded transcript, with request checking.
//! - [`Recorder`]: wraps any backend and appends every exchange to a transcript.

mod openai;
mod scripted;
mod transcript;

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::tools::ToolSignature;

pub use openai::{parse_chat_completion, request_body, OpenAiBackend, OpenAiConfig, API_KEY_ENV};
pub use scripted::ScriptedBackend;
pub use transcript::{parse_transcript, Recorder, ReplayBackend, TranscriptEntry, TranscriptSink};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("call budget of {limit} completions exceeded")]
    BudgetExceeded { limit: usize },
    #[error("script exhausted after {calls} completion(s)")]
    ScriptExhausted { calls: usize },
    #[error("replay mismatch at sequence_no {sequence_no}:\n{diff}")]
    ReplayMismatch { sequence_no: u64, diff: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transcript parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("I/O error: {0}")]
    Io(String),
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    Generator,
    Evaluator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
}

fn default_max_output_tokens() -> u32 {
    4096
}

impl ModelParams {
    pub fn new(model: impl Into<String>) -> Self {
        ModelParams {
            model: model.into(),
            temperature: 0.0,
            max_output_tokens: default_max_output_tokens(),
        }
    }
}

/// Which model serves generation and which serves evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRoster {
    pub generator: ModelParams,
    pub evaluator: ModelParams,
}

impl ModelRoster {
    pub fn validate(&self) -> Result<(), GatewayError> {
        for (label, p) in [("generator", &self.generator), ("evaluator", &self.evaluator)] {
            if p.model.trim().is_empty() {
                return Err(GatewayError::Config(format!("{label} model id is empty")));
            }
            if !(p.temperature >= 0.0) {
                return Err(GatewayError::Config(format!("{label} temperature must be >= 0")));
            }
            if p.max_output_tokens == 0 {
                return Err(GatewayError::Config(format!("{label} max_output_tokens must be > 0")));
            }
        }
        Ok(())
    }

    pub fn params(&self, role: ModelRole) -> &ModelParams {
        match role {
            ModelRole::Generator => &self.generator,
            ModelRole::Evaluator => &self.evaluator,
        }
    }
}

impl Default for ModelRoster {
    fn default() -> Self {
        ModelRoster {
            generator: ModelParams::new("gpt-4o"),
            evaluator: ModelParams::new("gpt-4o"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

impl ChatRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ChatRole::System => "system",
            ChatRole::User => "user",
            ChatRole::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: ChatRole,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: ChatRole::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: ChatRole::User,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_role: ModelRole,
    pub messages: Vec<Message>,
    #[serde(default)]
    pub tool_schemas: Vec<ToolSignature>,
}

impl CompletionRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.messages.first() {
            None => Err(GatewayError::InvalidRequest("request has no messages".into())),
            Some(m) if m.role != ChatRole::System => {
                Err(GatewayError::InvalidRequest("first message must have role system".into()))
            }
            Some(_) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    #[serde(default)]
    pub arguments: Map<String, Value>,
}

/// A model reply: either plain text or exactly one tool call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompletionResponse {
    Text { text: String },
    ToolCall { tool_call: ToolCall },
}

impl CompletionResponse {
    pub fn text(text: impl Into<String>) -> Self {
        CompletionResponse::Text { text: text.into() }
    }

    pub fn tool_call(name: impl Into<String>, arguments: Value) -> Self {
        let arguments = match arguments {
            Value::Object(m) => m,
            Value::Null => Map::new(),
            other => {
                let mut m = Map::new();
                m.insert("value".into(), other);
                m
            }
        };
        CompletionResponse::ToolCall {
            tool_call: ToolCall {
                name: name.into(),
                arguments,
            },
        }
    }
}

/// Anything that can answer a completion request.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError>;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        (**self).complete(request)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        (**self).complete(request)
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        (**self).complete(request)
    }
}

/// Caps the number of completions served by the wrapped backend.
pub struct Budgeted<B> {
    inner: B,
    limit: usize,
    used: AtomicUsize,
}

impl<B: Backend> Budgeted<B> {
    pub fn new(inner: B, limit: usize) -> Self {
        Budgeted {
            inner,
            limit,
            used: AtomicUsize::new(0),
        }
    }

    pub fn used(&self) -> usize {
        self.used.load(Ordering::SeqCst)
    }
}

impl<B: Backend> Backend for Budgeted<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let n = self.used.fetch_add(1, Ordering::SeqCst);
        if n >= self.limit {
            return Err(GatewayError::BudgetExceeded { limit: self.limit });
        }
        self.inner.complete(request)
    }
}

/// Source of ISO-8601 timestamps.
pub trait Clock: Send + Sync {
    fn now(&self) -> String;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> String {
        chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
    }
}

/// Deterministic clock: a fixed start that advances one second per reading.
pub struct LogicalClock {
    start: chrono::DateTime<chrono::Utc>,
    ticks: AtomicU64,
}

impl LogicalClock {
    pub fn new() -> Self {
        LogicalClock {
            start: chrono::DateTime::from_timestamp(1_704_067_200, 0).expect("valid epoch"),
            ticks: AtomicU64::new(0),
        }
    }
}

impl Default for LogicalClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for LogicalClock {
    fn now(&self) -> String {
        let n = self.ticks.fetch_add(1, Ordering::SeqCst);
        let t = self.start + chrono::Duration::seconds(n as i64);
        t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    }
}
