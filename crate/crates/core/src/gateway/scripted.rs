use std::path::Path;
use std::sync::Mutex;

use super::{Backend, CompletionRequest, CompletionResponse, GatewayError};

/// Returns canned responses in order, ignoring request content.
#[derive(Debug)]
pub struct ScriptedBackend {
    responses: Vec<CompletionResponse>,
    cursor: Mutex<usize>,
}

impl ScriptedBackend {
    pub fn new(responses: Vec<CompletionResponse>) -> Self {
        ScriptedBackend {
            responses,
            cursor: Mutex::new(0),
        }
    }

    /// Loads a JSON array of responses.
    pub fn from_json(text: &str) -> Result<Self, GatewayError> {
        let responses: Vec<CompletionResponse> =
            serde_json::from_str(text).map_err(|e| GatewayError::Parse {
                line: e.line(),
                message: e.to_string(),
            })?;
        Ok(Self::new(responses))
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn calls(&self) -> usize {
        *self.cursor.lock().expect("cursor lock")
    }

    pub fn remaining(&self) -> usize {
        self.responses.len() - self.calls()
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        request.validate()?;
        let mut cursor = self.cursor.lock().expect("cursor lock");
        let Some(r) = self.responses.get(*cursor) else {
            return Err(GatewayError::ScriptExhausted { calls: *cursor });
        };
        *cursor += 1;
        Ok(r.clone())
    }
}
