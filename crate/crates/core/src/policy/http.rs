//! OpenAI-compatible `/v1/chat/completions` client (non-streaming).

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{check_messages, whitespace_tokens, BackendError, ChatMessage, Completion, GenParams, Policy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_backoff")]
    pub retry_backoff_ms: u64,
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".to_string()
}

fn default_timeout() -> f64 {
    120.0
}

fn default_backoff() -> u64 {
    500
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: default_key_env(),
            timeout_secs: default_timeout(),
            retry_backoff_ms: default_backoff(),
        }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/v1/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Serialize)]
struct RequestBody<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    max_tokens: u32,
    temperature: f64,
    #[serde(skip_serializing_if = "<[String]>::is_empty")]
    stop: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct ResponseBody {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    completion_tokens: Option<u64>,
}

pub struct HttpPolicy {
    config: HttpConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl HttpPolicy {
    pub fn new(config: HttpConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Self::with_api_key(config, api_key)
    }

    pub fn with_api_key(config: HttpConfig, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs.max(0.001))))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self { config, agent, api_key }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn send_once(&self, body: &RequestBody<'_>) -> Result<String, BackendError> {
        let mut req = self.agent.post(self.config.endpoint()).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(map_ureq_error)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(map_ureq_error)?;
        if !(200..300).contains(&status) {
            return Err(BackendError::Status { status, body: text });
        }
        Ok(text)
    }
}

fn map_ureq_error(e: ureq::Error) -> BackendError {
    match e {
        ureq::Error::Timeout(_) => BackendError::Timeout,
        ureq::Error::StatusCode(status) => BackendError::Status {
            status,
            body: String::new(),
        },
        ureq::Error::Json(e) => BackendError::Malformed(e.to_string()),
        other => BackendError::Transport(other.to_string()),
    }
}

/// Extracts text and completion-token count from a response body.
pub(crate) fn decode_response(body: &str) -> Result<(String, u64), BackendError> {
    let parsed: ResponseBody = serde_json::from_str(body).map_err(|e| BackendError::Malformed(e.to_string()))?;
    let choice = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| BackendError::Malformed("response has no choices".into()))?;
    let text = choice.message.content.unwrap_or_default();
    let tokens = parsed
        .usage
        .and_then(|u| u.completion_tokens)
        .unwrap_or_else(|| whitespace_tokens(&text));
    Ok((text, tokens))
}

impl Policy for HttpPolicy {
    fn complete(&self, messages: &[ChatMessage], params: &GenParams) -> Result<Completion, BackendError> {
        check_messages(messages)?;
        if params.max_tokens < 1 {
            return Err(BackendError::InvalidRequest("max_tokens must be >= 1".into()));
        }
        let body = RequestBody {
            model: &self.config.model,
            messages,
            max_tokens: params.max_tokens,
            temperature: params.temperature,
            stop: &params.stop,
            seed: params.seed,
        };
        let started = Instant::now();
        let raw = match self.send_once(&body) {
            Err(BackendError::Transport(first)) => {
                log::warn!("transport error from {}, retrying once: {first}", self.config.endpoint());
                std::thread::sleep(Duration::from_millis(self.config.retry_backoff_ms));
                self.send_once(&body)?
            }
            other => other?,
        };
        let (text, generated_tokens) = decode_response(&raw)?;
        Ok(Completion {
            text,
            generated_tokens,
            wall_seconds: started.elapsed().as_secs_f64(),
        })
    }

    fn label(&self) -> String {
        format!("http:{}", self.config.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_block_preferred() {
        let (t, n) = decode_response(r#"{"choices":[{"message":{"content":"ok"}}],"usage":{"completion_tokens":3}}"#).unwrap();
        assert_eq!((t.as_str(), n), ("ok", 3));
    }

    #[test]
    fn whitespace_fallback_without_usage() {
        let (_, n) = decode_response(r#"{"choices":[{"message":{"role":"assistant","content":"a b  c"}}]}"#).unwrap();
        assert_eq!(n, 3);
    }

    #[test]
    fn malformed_bodies() {
        assert!(matches!(decode_response("not json"), Err(BackendError::Malformed(_))));
        assert!(matches!(decode_response(r#"{"choices":[]}"#), Err(BackendError::Malformed(_))));
    }

    #[test]
    fn endpoint_joins_cleanly() {
        assert_eq!(HttpConfig::new("http://h:1/", "m").endpoint(), "http://h:1/v1/chat/completions");
    }
}
