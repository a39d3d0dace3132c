//! Uniform completion interface over model backends.
//!
//! `Policy` is implemented by the OpenAI-compatible HTTP client, the
//! scripted rule table used for offline runs, and the heuristic tool-call
//! repairer. Handles are `Arc<dyn Policy>` and shared between workers.

mod http;
mod scripted;

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpConfig, HttpPolicy};
pub use scripted::{MatchScope, PolicyScript, ScriptRule, ScriptedPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub max_tokens: u32,
    pub temperature: f64,
    #[serde(default)]
    pub stop: Vec<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            max_tokens: 512,
            temperature: 0.0,
            stop: Vec::new(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub generated_tokens: u64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("server returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response body: {0}")]
    Malformed(String),
    #[error("request timed out")]
    Timeout,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

pub trait Policy: Send + Sync {
    fn complete(&self, messages: &[ChatMessage], params: &GenParams) -> Result<Completion, BackendError>;

    /// Short label used in logs and module_config.
    fn label(&self) -> String;
}

pub type BackendHandle = Arc<dyn Policy>;

/// Checks the preconditions shared by every backend.
pub fn check_messages(messages: &[ChatMessage]) -> Result<(), BackendError> {
    if messages.is_empty() {
        return Err(BackendError::InvalidRequest("messages must be nonempty".into()));
    }
    if let Some(m) = messages
        .iter()
        .find(|m| m.role != Role::Assistant && m.content.is_empty())
    {
        return Err(BackendError::InvalidRequest(format!(
            "{} message has empty content",
            m.role.as_str()
        )));
    }
    if system_first(messages) {
        Ok(())
    } else {
        Err(BackendError::InvalidRequest("system message must come first".into()))
    }
}

fn system_first(messages: &[ChatMessage]) -> bool {
    messages.iter().skip(1).all(|m| m.role != Role::System)
}

/// Counts whitespace-delimited tokens; used when a server omits usage.
pub fn whitespace_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// Flattens a message list into the single string scripted rules match on.
pub fn render_transcript(messages: &[ChatMessage]) -> String {
    let mut out = String::new();
    for m in messages {
        out.push_str("<|");
        out.push_str(m.role.as_str());
        out.push_str("|>\n");
        out.push_str(&m.content);
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("throughput undefined: total wall time is zero")]
pub struct UndefinedThroughput;

/// Completion tokens per second across a set of completions.
pub fn throughput(completions: &[Completion]) -> Result<f64, UndefinedThroughput> {
    let tokens: u64 = completions.iter().map(|c| c.generated_tokens).sum();
    let seconds: f64 = completions.iter().map(|c| c.wall_seconds).sum();
    if seconds > 0.0 {
        Ok(tokens as f64 / seconds)
    } else {
        Err(UndefinedThroughput)
    }
}

/// One call seen by a [`Recorder`].
#[derive(Debug, Clone)]
pub struct RecordedCall {
    pub messages: Vec<ChatMessage>,
    pub result: Result<Completion, BackendError>,
}

/// Wraps a backend and keeps every request/response pair.
pub struct Recorder {
    inner: BackendHandle,
    calls: Mutex<Vec<RecordedCall>>,
}

impl Recorder {
    pub fn new(inner: BackendHandle) -> Arc<Self> {
        Arc::new(Self {
            inner,
            calls: Mutex::new(Vec::new()),
        })
    }

    pub fn calls(&self) -> Vec<RecordedCall> {
        self.calls.lock().expect("recorder poisoned").clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().expect("recorder poisoned").len()
    }
}

impl Policy for Recorder {
    fn complete(&self, messages: &[ChatMessage], params: &GenParams) -> Result<Completion, BackendError> {
        let result = self.inner.complete(messages, params);
        self.calls.lock().expect("recorder poisoned").push(RecordedCall {
            messages: messages.to_vec(),
            result: result.clone(),
        });
        result
    }

    fn label(&self) -> String {
        self.inner.label()
    }
}

/// A backend that always fails; stands in for an unreachable endpoint.
pub struct FailingPolicy(pub BackendError);

impl Policy for FailingPolicy {
    fn complete(&self, _messages: &[ChatMessage], _params: &GenParams) -> Result<Completion, BackendError> {
        Err(self.0.clone())
    }

    fn label(&self) -> String {
        "failing".into()
    }
}
