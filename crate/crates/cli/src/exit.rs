//! Exit codes and the errors that carry them.

use std::fmt;

use synthforge_core::agent::AgentError;
use synthforge_core::design::DesignError;
use synthforge_core::gateway::GatewayError;
use synthforge_core::knowledge::KnowledgeError;

pub const OK: u8 = 0;
pub const QUALITY: u8 = 1;
pub const USAGE: u8 = 2;
pub const REPLAY_MISMATCH: u8 = 3;

/// An error with a specific exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: USAGE, message: message.into() }
    }

    pub fn quality(message: impl Into<String>) -> Self {
        CliError { code: QUALITY, message: message.into() }
    }

    pub fn replay(message: impl Into<String>) -> Self {
        CliError { code: REPLAY_MISMATCH, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

fn gateway_of_agent(e: &AgentError) -> Option<&GatewayError> {
    match e {
        AgentError::Gateway(g) => Some(g),
        _ => None,
    }
}

/// The gateway error at the bottom of a pipeline error, if any.
pub fn gateway_cause(err: &anyhow::Error) -> Option<&GatewayError> {
    for cause in err.chain() {
        if let Some(g) = cause.downcast_ref::<GatewayError>() {
            return Some(g);
        }
        if let Some(a) = cause.downcast_ref::<AgentError>() {
            if let Some(g) = gateway_of_agent(a) {
                return Some(g);
            }
        }
        if let Some(KnowledgeError::Agent(a)) = cause.downcast_ref::<KnowledgeError>() {
            if let Some(g) = gateway_of_agent(a) {
                return Some(g);
            }
        }
        if let Some(DesignError::Agent(a)) = cause.downcast_ref::<DesignError>() {
            if let Some(g) = gateway_of_agent(a) {
                return Some(g);
            }
        }
    }
    None
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(c) = err.chain().find_map(|c| c.downcast_ref::<CliError>()) {
        return c.code;
    }
    match gateway_cause(err) {
        Some(GatewayError::ReplayMismatch { .. }) => REPLAY_MISMATCH,
        _ => QUALITY,
    }
}
