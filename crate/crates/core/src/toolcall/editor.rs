//! Post-hoc tool-call repair.

use serde::{Deserialize, Serialize};

use super::grammar::{parse_bare_calls, parse_bare_calls_prefix, parse_tool_calls, parse_tool_calls_prefix, render_tool_calls};
use crate::model::{ToolCall, Value};
use crate::policy::{check_messages, whitespace_tokens, BackendError, ChatMessage, Completion, GenParams, Policy};
use crate::prompts;

pub const UNCHANGED: &str = "UNCHANGED";
pub const NO_VALID_TOOL_CALLS: &str = "NO_VALID_TOOL_CALLS";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "text", rename_all = "snake_case")]
pub enum EditOutcome {
    Unchanged,
    NoValidToolCalls,
    Repaired(String),
}

impl EditOutcome {
    pub fn from_reply(reply: &str) -> Self {
        match reply.trim() {
            UNCHANGED => EditOutcome::Unchanged,
            NO_VALID_TOOL_CALLS => EditOutcome::NoValidToolCalls,
            other => EditOutcome::Repaired(other.to_string()),
        }
    }

    /// The reply text this outcome corresponds to.
    pub fn as_reply(&self) -> &str {
        match self {
            EditOutcome::Unchanged => UNCHANGED,
            EditOutcome::NoValidToolCalls => NO_VALID_TOOL_CALLS,
            EditOutcome::Repaired(t) => t,
        }
    }
}

const RAW_OPEN: &str = "BROKEN_TOOL_CALL (to be audited and possibly corrected):\n";
const RAW_CLOSE: &str = "\n\nNow produce the final output according to the rules above.";

pub fn editor_messages(raw: &str) -> Vec<ChatMessage> {
    vec![
        ChatMessage::system(prompts::text(prompts::EDITOR_SYSTEM)),
        ChatMessage::user(prompts::fill(prompts::EDITOR_USER, &[("model_response", raw)])),
    ]
}

/// Recovers the raw model output from a rendered editor request.
pub fn extract_raw(user_content: &str) -> Option<&str> {
    let start = user_content.find(RAW_OPEN)? + RAW_OPEN.len();
    let end = user_content.rfind(RAW_CLOSE)?;
    (end >= start).then(|| &user_content[start..end])
}

pub fn edit_tool_call(raw: &str, backend: &dyn Policy, params: &GenParams) -> EditOutcome {
    match backend.complete(&editor_messages(raw), params) {
        Ok(c) => EditOutcome::from_reply(&c.text),
        Err(e) => {
            log::warn!("editor backend failed, keeping raw output: {e}");
            EditOutcome::Unchanged
        }
    }
}

fn strip_fences(text: &str) -> Option<&str> {
    let t = text.trim();
    let body = t.strip_prefix("```")?;
    let body = body.strip_suffix("```")?;
    let body = match body.find('\n') {
        Some(nl) if body[..nl].chars().all(|c| c.is_ascii_alphanumeric()) => &body[nl + 1..],
        _ => body,
    };
    Some(body.trim())
}

/// `{"name": {args}}` or `{"name": ..., "arguments"|"parameters": {args}}`.
fn json_call(v: &serde_json::Value) -> Option<ToolCall> {
    let obj = v.as_object()?;
    let to_args = |a: &serde_json::Value| -> Option<ToolCall> {
        let Value::Map(map) = Value::from_json(a) else { return None };
        Some(ToolCall {
            function: String::new(),
            arguments: map,
        })
    };
    if let Some(name) = obj.get("name").and_then(|n| n.as_str()) {
        let args = obj.get("arguments").or_else(|| obj.get("parameters"));
        let args = match args {
            Some(serde_json::Value::String(s)) => serde_json::from_str(s).ok()?,
            Some(a) => a.clone(),
            None => serde_json::Value::Object(Default::default()),
        };
        let mut call = to_args(&args)?;
        call.function = name.to_string();
        return Some(call);
    }
    if obj.len() == 1 {
        let (name, args) = obj.iter().next()?;
        let mut call = to_args(args)?;
        call.function = name.clone();
        return Some(call);
    }
    None
}

fn json_calls(v: &serde_json::Value) -> Option<Vec<ToolCall>> {
    match v {
        serde_json::Value::Array(items) if !items.is_empty() => items.iter().map(json_call).collect(),
        other => json_call(other).map(|c| vec![c]),
    }
}

fn is_ident_start(text: &str, i: usize) -> bool {
    let prev_ok = text[..i]
        .chars()
        .next_back()
        .is_none_or(|c| !(c.is_alphanumeric() || c == '_' || c == '.'));
    prev_ok && text[i..].starts_with(|c: char| c.is_ascii_alphabetic() || c == '_')
}

/// Finds tool calls embedded in surrounding prose.
fn scan_embedded(text: &str) -> Option<Vec<ToolCall>> {
    let mut found = Vec::new();
    let mut i = 0;
    while i < text.len() {
        if !text.is_char_boundary(i) {
            i += 1;
            continue;
        }
        let rest = &text[i..];
        let step = if rest.starts_with('[') {
            if let Some((calls, used)) = parse_tool_calls_prefix(rest).ok().filter(|(c, _)| !c.is_empty()) {
                found.extend(calls);
                used
            } else if let Some((calls, used)) = json_at(rest) {
                found.extend(calls);
                used
            } else {
                1
            }
        } else if rest.starts_with('{') {
            match json_at(rest) {
                Some((calls, used)) => {
                    found.extend(calls);
                    used
                }
                None => 1,
            }
        } else if is_ident_start(text, i) {
            match parse_bare_calls_prefix(rest) {
                Ok((calls, used)) => {
                    found.extend(calls);
                    used
                }
                Err(_) => rest.find(|c: char| !(c.is_alphanumeric() || c == '_' || c == '.')).unwrap_or(rest.len()).max(1),
            }
        } else {
            rest.chars().next().map_or(1, char::len_utf8)
        };
        i += step;
    }
    (!found.is_empty()).then_some(found)
}

fn json_at(text: &str) -> Option<(Vec<ToolCall>, usize)> {
    let mut stream = serde_json::Deserializer::from_str(text).into_iter::<serde_json::Value>();
    let v = stream.next()?.ok()?;
    let used = stream.byte_offset();
    json_calls(&v).map(|c| (c, used))
}

/// Rule-based stand-in for a model editor, covering the common breakages:
/// code fences, missing brackets, JSON-shaped calls and calls buried in prose.
pub fn heuristic_repair(raw: &str) -> EditOutcome {
    let trimmed = raw.trim();
    if parse_tool_calls(trimmed).is_ok() {
        return EditOutcome::Unchanged;
    }
    let body = strip_fences(trimmed).unwrap_or(trimmed);
    if let Ok(calls) = parse_tool_calls(body) {
        return EditOutcome::Repaired(render_tool_calls(&calls));
    }
    if let Ok(calls) = parse_bare_calls(body) {
        return EditOutcome::Repaired(render_tool_calls(&calls));
    }
    if let Some(calls) = serde_json::from_str::<serde_json::Value>(body).ok().as_ref().and_then(json_calls) {
        return EditOutcome::Repaired(render_tool_calls(&calls));
    }
    match scan_embedded(body) {
        Some(calls) => EditOutcome::Repaired(render_tool_calls(&calls)),
        None => EditOutcome::NoValidToolCalls,
    }
}

/// Editor backend that answers editor requests with [`heuristic_repair`].
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicEditor;

impl Policy for HeuristicEditor {
    fn complete(&self, messages: &[ChatMessage], _params: &GenParams) -> Result<Completion, BackendError> {
        check_messages(messages)?;
        let last = &messages[messages.len() - 1].content;
        let raw = extract_raw(last)
            .ok_or_else(|| BackendError::InvalidRequest("request is not an editor prompt".into()))?;
        let text = heuristic_repair(raw).as_reply().to_string();
        Ok(Completion {
            generated_tokens: whitespace_tokens(&text),
            text,
            wall_seconds: 0.0,
        })
    }

    fn label(&self) -> String {
        "heuristic-editor".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{FailingPolicy, ScriptedPolicy};

    fn repaired(raw: &str) -> String {
        match heuristic_repair(raw) {
            EditOutcome::Repaired(t) => t,
            other => panic!("expected repair for {raw:?}, got {other:?}"),
        }
    }

    #[test]
    fn canonical_input_is_unchanged() {
        assert_eq!(heuristic_repair(r#"[cd(folder="academic_venture")]"#), EditOutcome::Unchanged);
    }

    #[test]
    fn bare_call_gets_brackets() {
        assert_eq!(repaired(r#"cd(folder="academic_venture")"#), r#"[cd(folder="academic_venture")]"#);
    }

    #[test]
    fn json_object_forms() {
        assert_eq!(repaired(r#"{"cd": {"folder": "academic_venture"}}"#), r#"[cd(folder="academic_venture")]"#);
        assert_eq!(
            repaired(r#"{"name": "cd", "arguments": {"folder": "x"}}"#),
            r#"[cd(folder="x")]"#
        );
        assert_eq!(repaired(r#"[{"ls": {}}, {"pwd": {}}]"#), "[ls(), pwd()]");
    }

    #[test]
    fn prose_has_no_calls() {
        assert_eq!(heuristic_repair("The task is now complete."), EditOutcome::NoValidToolCalls);
        assert_eq!(heuristic_repair(""), EditOutcome::NoValidToolCalls);
    }

    #[test]
    fn calls_embedded_in_prose() {
        assert_eq!(repaired(r#"The task is now complete. The final tool-call is {"ls": {}}"#), "[ls()]");
        assert_eq!(repaired("Sure! [ls()] should do it."), "[ls()]");
        assert_eq!(repaired("I will call pwd() now."), "[pwd()]");
    }

    #[test]
    fn code_fences() {
        assert_eq!(repaired("```python\n[ls()]\n```"), "[ls()]");
    }

    #[test]
    fn reply_mapping() {
        assert_eq!(EditOutcome::from_reply(" UNCHANGED\n"), EditOutcome::Unchanged);
        assert_eq!(EditOutcome::from_reply("NO_VALID_TOOL_CALLS"), EditOutcome::NoValidToolCalls);
        assert_eq!(EditOutcome::from_reply("[ls()]"), EditOutcome::Repaired("[ls()]".into()));
    }

    #[test]
    fn backend_error_keeps_raw() {
        let p = FailingPolicy(BackendError::Timeout);
        assert_eq!(edit_tool_call("junk", &p, &GenParams::default()), EditOutcome::Unchanged);
    }

    #[test]
    fn heuristic_backend_round_trip() {
        let raw = "cd(folder=\"a\")\n\nextra";
        let msgs = editor_messages(raw);
        assert_eq!(extract_raw(&msgs[1].content), Some(raw));
        let out = edit_tool_call(r#"cd(folder="a")"#, &HeuristicEditor, &GenParams::default());
        assert_eq!(out, EditOutcome::Repaired(r#"[cd(folder="a")]"#.into()));
        let scripted = ScriptedPolicy::constant("UNCHANGED");
        assert_eq!(edit_tool_call("[ls()]", &scripted, &GenParams::default()), EditOutcome::Unchanged);
    }
}
