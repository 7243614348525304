//! Single-agent loop: reason with the Thought action, act with tools, and
//! finish through a structured response tool.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::gateway::{Backend, CompletionRequest, CompletionResponse, GatewayError, Message, ModelRole};
use crate::prompt::{assemble, ActionOutcome, AncillaryText, PromptError, RoleTag};
use crate::schema::{ResponseSchema, StructuredResponse};
use crate::tools::{ToolRegistry, THOUGHT_TOOL, TOOL_ERROR_PREFIX};

pub const DEFAULT_THOUGHT_CAP: usize = 3;
pub const DEFAULT_STEP_CAP: usize = 12;
pub const DEFAULT_FORMAT_RETRIES: usize = 2;
/// Tool name under which refusals and other runtime notices are observed.
pub const SYSTEM_OBSERVER: &str = "system";

#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub role_tag: RoleTag,
    pub model_role: ModelRole,
    pub allowed_tools: Vec<String>,
    pub thought_cap: usize,
    pub step_cap: usize,
    pub response_schema: ResponseSchema,
    /// Reformat rounds allowed after a plain-text or invalid final response.
    pub format_retries: usize,
}

impl AgentConfig {
    pub fn new(role_tag: RoleTag, model_role: ModelRole, response_schema: ResponseSchema) -> Self {
        AgentConfig {
            role_tag,
            model_role,
            allowed_tools: vec![THOUGHT_TOOL.to_string()],
            thought_cap: DEFAULT_THOUGHT_CAP,
            step_cap: DEFAULT_STEP_CAP,
            response_schema,
            format_retries: DEFAULT_FORMAT_RETRIES,
        }
    }

    pub fn with_tools(mut self, tools: &[&str]) -> Self {
        for t in tools {
            if !self.allowed_tools.iter().any(|a| a == t) {
                self.allowed_tools.push(t.to_string());
            }
        }
        self
    }

    pub fn caps(mut self, thought_cap: usize, step_cap: usize) -> Self {
        self.thought_cap = thought_cap;
        self.step_cap = step_cap;
        self
    }

    pub fn format_retries(mut self, n: usize) -> Self {
        self.format_retries = n;
        self
    }

    pub fn validate(&self, tools: &ToolRegistry) -> Result<(), AgentError> {
        if self.thought_cap < 1 {
            return Err(AgentError::Config("thought_cap must be at least 1".into()));
        }
        if self.step_cap < self.thought_cap + 1 {
            return Err(AgentError::Config(format!(
                "step_cap {} must exceed thought_cap {}",
                self.step_cap, self.thought_cap
            )));
        }
        for t in &self.allowed_tools {
            if !tools.contains(t) {
                return Err(AgentError::Config(format!("allowed tool `{t}` is not registered")));
            }
        }
        if tools.contains(&self.response_schema.id) {
            return Err(AgentError::Config(format!(
                "response tool `{}` collides with a registered tool",
                self.response_schema.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentState {
    pub iteration: usize,
    pub outcomes: Vec<ActionOutcome>,
    pub consecutive_thoughts: usize,
    pub ancillary: Option<AncillaryText>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Directive {
    ExecuteTool { name: String, arguments: Map<String, Value> },
    AcceptFinal { arguments: Map<String, Value> },
    RefuseThought,
    Fail(FailReason),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FailReason {
    /// The model answered in prose instead of calling a tool.
    PlainText,
    /// The model called a tool it is not allowed to use.
    UnknownTool(String),
}

/// The decision node: maps one model reply to the next action.
pub fn step(state: &AgentState, config: &AgentConfig, response: &CompletionResponse) -> Directive {
    match response {
        CompletionResponse::Text { .. } => Directive::Fail(FailReason::PlainText),
        CompletionResponse::ToolCall { tool_call } => {
            let name = tool_call.name.as_str();
            if name == config.response_schema.id {
                Directive::AcceptFinal {
                    arguments: tool_call.arguments.clone(),
                }
            } else if name == THOUGHT_TOOL && state.consecutive_thoughts >= config.thought_cap {
                Directive::RefuseThought
            } else if config.allowed_tools.iter().any(|t| t == name) {
                Directive::ExecuteTool {
                    name: name.to_string(),
                    arguments: tool_call.arguments.clone(),
                }
            } else {
                Directive::Fail(FailReason::UnknownTool(name.to_string()))
            }
        }
    }
}

/// Validates a final response against `schema`.
pub fn enforce_schema(
    raw: &CompletionResponse,
    schema: &ResponseSchema,
) -> Result<(StructuredResponse, Vec<String>), Vec<String>> {
    let args = match raw {
        CompletionResponse::ToolCall { tool_call } if tool_call.name == schema.id => &tool_call.arguments,
        _ => return Err(vec![format!("final response must be a call to the {} tool", schema.id)]),
    };
    let v = schema.validate(args)?;
    Ok((
        StructuredResponse {
            schema_id: schema.id.clone(),
            payload: v.payload,
        },
        v.warnings,
    ))
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("agent configuration: {0}")]
    Config(String),
    #[error("step cap of {completions} completions reached without a final response")]
    StepCapExceeded {
        completions: usize,
        outcomes: Vec<ActionOutcome>,
    },
    #[error("final response failed schema {schema_id}: {}", .diagnostics.join("; "))]
    SchemaViolation {
        schema_id: String,
        diagnostics: Vec<String>,
        outcomes: Vec<ActionOutcome>,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentOutcome {
    pub response: StructuredResponse,
    pub outcomes: Vec<ActionOutcome>,
    pub completions: usize,
    pub warnings: Vec<String>,
}

/// System message describing the action protocol.
pub fn protocol_preamble(config: &AgentConfig) -> String {
    let others: Vec<&str> = config
        .allowed_tools
        .iter()
        .map(String::as_str)
        .filter(|t| *t != THOUGHT_TOOL)
        .collect();
    let mut s = String::from("You work by taking actions, one tool call per turn.\n");
    s.push_str(&format!(
        "- {THOUGHT_TOOL}: call the {THOUGHT_TOOL} tool to reason about what to do next. At most {} {THOUGHT_TOOL} calls may come in a row.\n",
        config.thought_cap
    ));
    if others.is_empty() {
        s.push_str("- Action: no other tools are available for this task.\n");
    } else {
        s.push_str(&format!("- Action: call one of: {}.\n", others.join(", ")));
    }
    s.push_str("- Observation: each result is appended to the task inside an [OBSERVATION] block.\n");
    s.push_str(&format!(
        "- Response: when finished, call the {} tool. Replies that do not use it are rejected.\n",
        config.response_schema.id
    ));
    s.push_str(&format!("You have at most {} turns.", config.step_cap));
    s
}

fn stringify_args(args: &Map<String, Value>) -> BTreeMap<String, String> {
    args.iter()
        .map(|(k, v)| {
            let s = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            (k.clone(), s)
        })
        .collect()
}

/// Runs the loop until a valid structured response or a cap.
///
/// `task` is the rendered template text; `ancillary` is the overseeing
/// node's note, repeated on every request.
pub fn run_agent(
    config: &AgentConfig,
    task: &str,
    ancillary: Option<AncillaryText>,
    tools: &ToolRegistry,
    backend: &dyn Backend,
) -> Result<AgentOutcome, AgentError> {
    config.validate(tools)?;
    let system = protocol_preamble(config);
    let mut schemas: Vec<_> = config
        .allowed_tools
        .iter()
        .filter_map(|t| tools.signature(t).cloned())
        .collect();
    schemas.push(config.response_schema.to_signature());

    let mut state = AgentState {
        ancillary: ancillary.clone(),
        ..AgentState::default()
    };
    let mut retries_left = config.format_retries;
    let mut warnings = Vec::new();
    let mut completions = 0;
    while completions < config.step_cap {
        let prompt = assemble(task, &state.outcomes, state.ancillary.as_ref())?;
        let request = CompletionRequest {
            model_role: config.model_role,
            messages: vec![Message::system(system.clone()), Message::user(prompt.text)],
            tool_schemas: schemas.clone(),
        };
        let response = backend.complete(&request)?;
        completions += 1;
        state.iteration = completions;
        // the note from the overseer persists; corrective nudges last one turn
        state.ancillary = ancillary.clone();
        let step_index = state.outcomes.len();
        match step(&state, config, &response) {
            Directive::ExecuteTool { name, arguments } => {
                let output = tools.dispatch(&name, &arguments);
                if name == THOUGHT_TOOL {
                    state.consecutive_thoughts += 1;
                } else {
                    state.consecutive_thoughts = 0;
                }
                state.outcomes.push(ActionOutcome {
                    step_index,
                    tool_name: name,
                    arguments: stringify_args(&arguments),
                    output,
                });
            }
            Directive::RefuseThought => {
                state.outcomes.push(ActionOutcome {
                    step_index,
                    tool_name: SYSTEM_OBSERVER.into(),
                    arguments: BTreeMap::new(),
                    output: format!(
                        "{THOUGHT_TOOL} refused: {} {THOUGHT_TOOL} calls in a row is the limit. Call another tool or deliver the {} response.",
                        config.thought_cap, config.response_schema.id
                    ),
                });
            }
            Directive::Fail(FailReason::UnknownTool(name)) => {
                let CompletionResponse::ToolCall { tool_call } = &response else { unreachable!() };
                state.outcomes.push(ActionOutcome {
                    step_index,
                    tool_name: name.clone(),
                    arguments: stringify_args(&tool_call.arguments),
                    output: format!("{TOOL_ERROR_PREFIX} unknown tool `{name}`"),
                });
            }
            Directive::Fail(FailReason::PlainText) => {
                let diagnostics = vec![format!(
                    "plain-text reply; the response must be delivered through the {} tool",
                    config.response_schema.id
                )];
                if retries_left == 0 {
                    return Err(AgentError::SchemaViolation {
                        schema_id: config.response_schema.id.clone(),
                        diagnostics,
                        outcomes: state.outcomes,
                    });
                }
                retries_left -= 1;
                state.ancillary = Some(nudge(&diagnostics, config));
            }
            Directive::AcceptFinal { .. } => match enforce_schema(&response, &config.response_schema) {
                Ok((structured, w)) => {
                    for m in &w {
                        log::warn!("{}: {m}", config.response_schema.id);
                    }
                    warnings.extend(w);
                    return Ok(AgentOutcome {
                        response: structured,
                        outcomes: state.outcomes,
                        completions,
                        warnings,
                    });
                }
                Err(diagnostics) => {
                    if retries_left == 0 {
                        return Err(AgentError::SchemaViolation {
                            schema_id: config.response_schema.id.clone(),
                            diagnostics,
                            outcomes: state.outcomes,
                        });
                    }
                    retries_left -= 1;
                    state.ancillary = Some(nudge(&diagnostics, config));
                }
            },
        }
    }
    Err(AgentError::StepCapExceeded {
        completions,
        outcomes: state.outcomes,
    })
}

fn nudge(diagnostics: &[String], config: &AgentConfig) -> AncillaryText {
    AncillaryText {
        body: format!(
            "Your last response was rejected:\n{}\nCall the {} tool again with every required field.",
            diagnostics.iter().map(|d| format!("- {d}")).collect::<Vec<_>>().join("\n"),
            config.response_schema.id
        ),
        origin: "format-check".into(),
    }
}
