//! OpenAI-compatible `/v1/chat/completions` client.

use std::time::Duration;

use serde_json::{json, Map, Value};

use super::{Backend, CompletionRequest, CompletionResponse, GatewayError, ModelRoster};

pub const API_KEY_ENV: &str = "SYNTHFORGE_API_KEY";

#[derive(Debug, Clone)]
pub struct OpenAiConfig {
    /// Server root, e.g. `https://api.openai.com`; `/v1/chat/completions` is appended.
    pub base_url: String,
    pub api_key: Option<String>,
    pub roster: ModelRoster,
    pub timeout: Duration,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl OpenAiConfig {
    pub fn new(base_url: impl Into<String>, roster: ModelRoster) -> Self {
        OpenAiConfig {
            base_url: base_url.into(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            roster,
            timeout: Duration::from_secs(300),
            max_attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/v1/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

pub struct OpenAiBackend {
    config: OpenAiConfig,
    client: reqwest::blocking::Client,
}

impl OpenAiBackend {
    pub fn new(config: OpenAiConfig) -> Result<Self, GatewayError> {
        config.roster.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(OpenAiBackend { config, client })
    }

    fn attempt(&self, body: &Value) -> Result<Value, Attempt> {
        let mut req = self.client.post(self.config.endpoint()).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Attempt::Retry(e.to_string()))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Attempt::Retry(format!("HTTP {status}: {text}")));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(GatewayError::Http {
                status: status.as_u16(),
                body: text,
            }));
        }
        serde_json::from_str(&text).map_err(|e| Attempt::Fatal(GatewayError::Malformed(e.to_string())))
    }
}

enum Attempt {
    Retry(String),
    Fatal(GatewayError),
}

/// Chat-completion request body for a completion request.
pub fn request_body(request: &CompletionRequest, roster: &ModelRoster) -> Value {
    let params = roster.params(request.model_role);
    let messages: Vec<Value> = request
        .messages
        .iter()
        .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
        .collect();
    let mut body = json!({
        "model": params.model,
        "messages": messages,
        "temperature": params.temperature,
        "max_tokens": params.max_output_tokens,
    });
    if !request.tool_schemas.is_empty() {
        let tools: Vec<Value> = request.tool_schemas.iter().map(|t| t.to_openai_json()).collect();
        body["tools"] = Value::Array(tools);
        body["tool_choice"] = json!("auto");
    }
    body
}

/// Extracts the first tool call (or the text content) from a chat-completion body.
pub fn parse_chat_completion(body: &Value) -> Result<CompletionResponse, GatewayError> {
    let message = body
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("message"))
        .ok_or_else(|| GatewayError::Malformed("missing choices[0].message".into()))?;
    if let Some(call) = message.get("tool_calls").and_then(|c| c.as_array()).and_then(|c| c.first()) {
        let function = call
            .get("function")
            .ok_or_else(|| GatewayError::Malformed("tool call without function".into()))?;
        let name = function
            .get("name")
            .and_then(Value::as_str)
            .filter(|n| !n.is_empty())
            .ok_or_else(|| GatewayError::Malformed("tool call without name".into()))?;
        let arguments = match function.get("arguments") {
            None | Some(Value::Null) => Map::new(),
            Some(Value::String(s)) if s.trim().is_empty() => Map::new(),
            Some(Value::String(s)) => match serde_json::from_str::<Value>(s) {
                Ok(Value::Object(m)) => m,
                Ok(_) => return Err(GatewayError::Malformed(format!("arguments of `{name}` are not an object"))),
                Err(e) => return Err(GatewayError::Malformed(format!("arguments of `{name}`: {e}"))),
            },
            Some(Value::Object(m)) => m.clone(),
            Some(_) => return Err(GatewayError::Malformed(format!("arguments of `{name}` are not an object"))),
        };
        return Ok(CompletionResponse::tool_call(name, Value::Object(arguments)));
    }
    match message.get("content").and_then(Value::as_str) {
        Some(text) if !text.is_empty() => Ok(CompletionResponse::text(text)),
        _ => Err(GatewayError::Malformed("message has neither tool_calls nor content".into())),
    }
}

impl Backend for OpenAiBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        request.validate()?;
        let body = request_body(request, &self.config.roster);
        let mut backoff = self.config.initial_backoff;
        let mut last = String::new();
        for attempt in 1..=self.config.max_attempts {
            match self.attempt(&body) {
                Ok(v) => return parse_chat_completion(&v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    log::warn!("chat completion attempt {attempt} failed: {msg}");
                    last = msg;
                    if attempt < self.config.max_attempts {
                        std::thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        Err(GatewayError::Transport {
            attempts: self.config.max_attempts,
            message: last,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_text_and_tool_calls() {
        let text = json!({"choices": [{"message": {"role": "assistant", "content": "hello"}}]});
        assert_eq!(parse_chat_completion(&text).unwrap(), CompletionResponse::text("hello"));
        let call = json!({"choices": [{"message": {"content": null, "tool_calls": [
            {"id": "c1", "type": "function", "function": {"name": "Thought", "arguments": "{\"thought\":\"hm\"}"}}
        ]}}]});
        assert_eq!(
            parse_chat_completion(&call).unwrap(),
            CompletionResponse::tool_call("Thought", json!({"thought": "hm"}))
        );
    }

    #[test]
    fn malformed_bodies() {
        for bad in [
            json!({}),
            json!({"choices": []}),
            json!({"choices": [{"message": {"content": ""}}]}),
            json!({"choices": [{"message": {"tool_calls": [{"function": {"name": "x", "arguments": "[1]"}}]}}]}),
            json!({"choices": [{"message": {"tool_calls": [{"function": {"name": "x", "arguments": "{"}}]}}]}),
        ] {
            assert!(matches!(parse_chat_completion(&bad), Err(GatewayError::Malformed(_))), "{bad}");
        }
    }

    #[test]
    fn endpoint_joining() {
        let c = OpenAiConfig::new("http://localhost:8080/", ModelRoster::default());
        assert_eq!(c.endpoint(), "http://localhost:8080/v1/chat/completions");
    }
}
