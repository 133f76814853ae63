//! Chat backends: a scripted replay backend for offline runs and a remote
//! HTTP backend speaking the common chat-completions shape.

use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::http::RemoteEndpoint;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: "assistant".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl std::ops::AddAssign for Usage {
    fn add_assign(&mut self, rhs: Self) {
        self.input_tokens += rhs.input_tokens;
        self.output_tokens += rhs.output_tokens;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub content: String,
    #[serde(default)]
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChatError {
    #[error("chat backend failure: {0}")]
    Backend(String),
    #[error("scripted transcript exhausted after {0} replies")]
    Exhausted(usize),
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<Completion, ChatError>;
}

/// Replays canned completions in order and records every request.
#[derive(Debug, Default)]
pub struct MockChat {
    replies: Vec<Completion>,
    state: Mutex<MockState>,
}

#[derive(Debug, Default)]
struct MockState {
    next: usize,
    requests: Vec<Vec<ChatMessage>>,
}

impl MockChat {
    pub fn new(replies: Vec<Completion>) -> Self {
        Self { replies, state: Mutex::default() }
    }

    /// One JSON object per line: `{"content": "...", "usage": {"input_tokens": n, "output_tokens": m}}`.
    /// A bare JSON string is accepted as a reply with zero usage.
    pub fn from_jsonl(text: &str) -> Result<Self, ChatError> {
        let mut replies = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let value: serde_json::Value =
                serde_json::from_str(line).map_err(|e| ChatError::Backend(format!("transcript line {}: {e}", i + 1)))?;
            let reply = match value {
                serde_json::Value::String(content) => Completion { content, usage: Usage::default() },
                other => serde_json::from_value(other).map_err(|e| ChatError::Backend(format!("transcript line {}: {e}", i + 1)))?,
            };
            replies.push(reply);
        }
        Ok(Self::new(replies))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ChatError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| ChatError::Backend(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_jsonl(&text)
    }

    pub fn calls(&self) -> usize {
        self.state.lock().expect("mock state").next
    }

    pub fn requests(&self) -> Vec<Vec<ChatMessage>> {
        self.state.lock().expect("mock state").requests.clone()
    }

    pub fn remaining(&self) -> usize {
        self.replies.len() - self.calls()
    }
}

impl ChatBackend for MockChat {
    fn complete(&self, messages: &[ChatMessage]) -> Result<Completion, ChatError> {
        let mut state = self.state.lock().expect("mock state");
        let reply = self.replies.get(state.next).cloned().ok_or(ChatError::Exhausted(self.replies.len()))?;
        state.next += 1;
        state.requests.push(messages.to_vec());
        Ok(reply)
    }
}

/// Remote model behind `{"model", "messages"}` → `{"choices": [{"message": {"content"}}], "usage"}`.
#[derive(Debug, Clone)]
pub struct HttpChat {
    endpoint: RemoteEndpoint,
    model: String,
}

impl HttpChat {
    pub fn new(url: impl Into<String>, key: Option<String>, model: impl Into<String>) -> Self {
        Self { endpoint: RemoteEndpoint::new(url, key), model: model.into() }
    }

    /// Reads `CTG_CHAT_URL` and `CTG_CHAT_KEY`.
    pub fn from_env(model: impl Into<String>) -> Option<Self> {
        Some(Self { endpoint: RemoteEndpoint::from_env("CTG_CHAT")?, model: model.into() })
    }

    pub fn with_retry(mut self, attempts: u32, backoff: std::time::Duration) -> Self {
        self.endpoint.attempts = attempts;
        self.endpoint.backoff = backoff;
        self
    }
}

impl ChatBackend for HttpChat {
    fn complete(&self, messages: &[ChatMessage]) -> Result<Completion, ChatError> {
        let reply = self.endpoint.post(&json!({"model": self.model, "messages": messages})).map_err(ChatError::Backend)?;
        let content = reply["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| ChatError::Backend("response has no choices[0].message.content".into()))?
            .to_string();
        let usage = &reply["usage"];
        let count = |keys: [&str; 2]| keys.iter().find_map(|k| usage[*k].as_u64()).unwrap_or(0);
        Ok(Completion {
            content,
            usage: Usage {
                input_tokens: count(["input_tokens", "prompt_tokens"]),
                output_tokens: count(["output_tokens", "completion_tokens"]),
            },
        })
    }
}

/// Parses a `--backend` argument: `live` (environment endpoint) or `mock:<file>`.
pub fn backend_from_spec(spec: &str, model: &str) -> Result<Box<dyn ChatBackend>, ChatError> {
    if let Some(path) = spec.strip_prefix("mock:") {
        return Ok(Box::new(MockChat::load(path)?));
    }
    if spec == "live" {
        return HttpChat::from_env(model)
            .map(|b| Box::new(b) as Box<dyn ChatBackend>)
            .ok_or_else(|| ChatError::Backend("CTG_CHAT_URL is not set".into()));
    }
    Err(ChatError::Backend(format!("unknown backend `{spec}` (expected `live` or `mock:<file>`)")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_replays_in_order_then_exhausts() {
        let mock = MockChat::from_jsonl("\"first\"\n{\"content\":\"second\",\"usage\":{\"input_tokens\":3,\"output_tokens\":4}}\n").unwrap();
        assert_eq!(mock.complete(&[ChatMessage::user("a")]).unwrap().content, "first");
        let second = mock.complete(&[ChatMessage::user("b")]).unwrap();
        assert_eq!(second.usage, Usage { input_tokens: 3, output_tokens: 4 });
        assert_eq!(mock.complete(&[]), Err(ChatError::Exhausted(2)));
        assert_eq!(mock.requests()[1][0].content, "b");
    }

    #[test]
    fn backend_spec_is_validated() {
        assert!(backend_from_spec("carrier-pigeon", "m").is_err());
        assert!(backend_from_spec("mock:/definitely/missing.jsonl", "m").is_err());
    }
}
