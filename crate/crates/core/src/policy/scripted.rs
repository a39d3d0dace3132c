use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{check_messages, render_transcript, whitespace_tokens, BackendError, ChatMessage, Completion, GenParams, Policy};

/// What part of the request a rule looks at.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchScope {
    /// The whole rendered transcript (see [`render_transcript`]).
    #[default]
    Prompt,
    /// Only the content of the final message.
    Last,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regex: Option<String>,
    #[serde(default)]
    pub scope: MatchScope,
    pub response: String,
}

impl ScriptRule {
    pub fn contains(needle: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            contains: Some(needle.into()),
            regex: None,
            scope: MatchScope::Prompt,
            response: response.into(),
        }
    }

    pub fn regex(pattern: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            contains: None,
            regex: Some(pattern.into()),
            scope: MatchScope::Prompt,
            response: response.into(),
        }
    }

    pub fn on_last(mut self) -> Self {
        self.scope = MatchScope::Last;
        self
    }
}

/// Ordered rule table; the first matching rule wins, else `default`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyScript {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub default: String,
    /// When set, completions report `tokens / rate` seconds of latency so
    /// that throughput stays defined without touching the wall clock.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulated_tokens_per_second: Option<f64>,
}

impl PolicyScript {
    pub fn new(default: impl Into<String>) -> Self {
        Self {
            rules: Vec::new(),
            default: default.into(),
            simulated_tokens_per_second: None,
        }
    }

    pub fn rule(mut self, rule: ScriptRule) -> Self {
        self.rules.push(rule);
        self
    }

    /// Builds a script that replays a ReAct trajectory step by step.
    ///
    /// Each rule fires when the prompt's interaction history (everything
    /// after "Your task is:") ends with the actions issued so far, so the
    /// script answers step `k+1` once `k` steps are visible. Rules are
    /// ordered longest prefix first. Requires the full history in the
    /// prompt, i.e. no memory module.
    pub fn replay(steps: &[(&str, &str)]) -> Self {
        let response = |i: usize| format!("Thought: {}\nAction: {}", steps[i].0, steps[i].1);
        let mut rules = Vec::new();
        for k in (1..steps.len()).rev() {
            let mut pattern = String::from(r"(?s)Your task is: ");
            for (_, action) in &steps[..k] {
                pattern.push_str(".*?\nAction: ");
                pattern.push_str(&regex::escape(action));
                pattern.push('\n');
            }
            pattern.push_str("Observation: [^\n]*\n\nThe next action could be chosen");
            rules.push(ScriptRule::regex(pattern, response(k)));
        }
        Self {
            rules,
            default: if steps.is_empty() { String::new() } else { response(0) },
            simulated_tokens_per_second: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid script rule {index}: {message}")]
pub struct ScriptError {
    pub index: usize,
    pub message: String,
}

enum Matcher {
    Contains(String),
    Regex(Regex),
}

/// Deterministic backend driven by a [`PolicyScript`].
///
/// A pure function of (messages, script): no clock, no randomness.
pub struct ScriptedPolicy {
    name: String,
    script: PolicyScript,
    matchers: Vec<Matcher>,
}

impl ScriptedPolicy {
    pub fn new(name: impl Into<String>, script: PolicyScript) -> Result<Self, ScriptError> {
        let mut matchers = Vec::with_capacity(script.rules.len());
        for (index, rule) in script.rules.iter().enumerate() {
            let m = match (&rule.contains, &rule.regex) {
                (Some(s), None) => Matcher::Contains(s.clone()),
                (None, Some(p)) => Matcher::Regex(Regex::new(p).map_err(|e| ScriptError {
                    index,
                    message: e.to_string(),
                })?),
                _ => {
                    return Err(ScriptError {
                        index,
                        message: "exactly one of `contains` or `regex` is required".into(),
                    })
                }
            };
            matchers.push(m);
        }
        if let Some(rate) = script.simulated_tokens_per_second {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(ScriptError {
                    index: script.rules.len(),
                    message: "simulated_tokens_per_second must be positive".into(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            script,
            matchers,
        })
    }

    /// Convenience for a backend that always returns `text`.
    pub fn constant(text: impl Into<String>) -> Self {
        Self::new("constant", PolicyScript::new(text)).expect("no rules to compile")
    }

    pub fn respond(&self, messages: &[ChatMessage]) -> &str {
        let prompt = render_transcript(messages);
        let last = messages.last().map(|m| m.content.as_str()).unwrap_or("");
        for (rule, matcher) in self.script.rules.iter().zip(&self.matchers) {
            let hay = match rule.scope {
                MatchScope::Prompt => prompt.as_str(),
                MatchScope::Last => last,
            };
            let hit = match matcher {
                Matcher::Contains(s) => hay.contains(s.as_str()),
                Matcher::Regex(r) => r.is_match(hay),
            };
            if hit {
                return &rule.response;
            }
        }
        &self.script.default
    }
}

impl Policy for ScriptedPolicy {
    fn complete(&self, messages: &[ChatMessage], _params: &GenParams) -> Result<Completion, BackendError> {
        check_messages(messages)?;
        let text = self.respond(messages).to_string();
        let generated_tokens = whitespace_tokens(&text);
        let wall_seconds = match self.script.simulated_tokens_per_second {
            Some(rate) => generated_tokens as f64 / rate,
            None => 0.0,
        };
        Ok(Completion {
            text,
            generated_tokens,
            wall_seconds,
        })
    }

    fn label(&self) -> String {
        format!("scripted:{}", self.name)
    }
}
