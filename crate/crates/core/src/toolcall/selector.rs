//! Pre-hoc tool selection: narrows the function list before the agent acts.

use crate::model::ToolSpec;
use crate::policy::{ChatMessage, GenParams, Policy};
use crate::prompts;

pub const MAX_SELECTED: usize = 10;
pub const MIN_SELECTED: usize = 3;

/// Context handed to the selector alongside the function list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SelectorContext<'a> {
    pub user_message: &'a str,
    pub previous_calls: Option<&'a str>,
    pub previous_results: Option<&'a str>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub tools: Vec<ToolSpec>,
    /// True when the full list was returned because the reply was unusable.
    pub fallback: bool,
    pub warning: Option<String>,
}

impl Selection {
    pub fn names(&self) -> Vec<String> {
        self.tools.iter().map(|t| t.name.clone()).collect()
    }
}

/// One JSON object per line, the form used in every function listing.
pub fn describe_tools(tools: &[ToolSpec]) -> String {
    tools
        .iter()
        .map(|t| serde_json::to_string(t).expect("tool specs serialize"))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_selector_history(ctx: &SelectorContext<'_>) -> String {
    let mut out = format!("[User Message]\n{}", ctx.user_message);
    if let Some(calls) = ctx.previous_calls {
        out.push_str("\n\n[Tool Call]\n");
        out.push_str(calls);
    }
    if let Some(results) = ctx.previous_results {
        out.push_str("\n\n[Tool Execution Results]\n");
        out.push_str(results);
    }
    out
}

pub fn selector_messages(tools: &[ToolSpec], ctx: &SelectorContext<'_>) -> Vec<ChatMessage> {
    let user = prompts::fill(
        prompts::SELECTOR_USER,
        &[
            ("available_functions", &describe_tools(tools)),
            ("interaction_history", &render_selector_history(ctx)),
        ],
    );
    vec![ChatMessage::system(prompts::text(prompts::SELECTOR_SYSTEM)), ChatMessage::user(user)]
}

fn clean_name(line: &str) -> &str {
    let mut s = line.trim();
    for prefix in ["- ", "* ", "• "] {
        if let Some(rest) = s.strip_prefix(prefix) {
            s = rest.trim_start();
        }
    }
    let digits = s.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        if let Some(rest) = s[digits..].strip_prefix(['.', ')']) {
            s = rest.trim_start();
        }
    }
    s.trim_matches(|c: char| c == '`' || c == '"' || c == '\'' || c == ',' || c.is_whitespace())
}

/// Maps a selector reply onto the tool list. Never returns a set outside
/// `[min(3, |D|), 10]` unless it falls back to the full list.
pub fn parse_selection(reply: &str, tools: &[ToolSpec]) -> Selection {
    let mut picked: Vec<ToolSpec> = Vec::new();
    for name in reply.lines().flat_map(|l| l.split(',')).map(clean_name) {
        if picked.iter().any(|t| t.name == name) {
            continue;
        }
        if let Some(spec) = tools.iter().find(|t| t.name == name) {
            picked.push(spec.clone());
        }
    }
    picked.truncate(MAX_SELECTED);
    let floor = MIN_SELECTED.min(tools.len());
    if picked.len() < floor {
        return Selection {
            tools: tools.to_vec(),
            fallback: true,
            warning: Some(format!(
                "selector returned {} usable names, fewer than {floor}; using all tools",
                picked.len()
            )),
        };
    }
    Selection {
        tools: picked,
        fallback: false,
        warning: None,
    }
}

pub fn select_tools(tools: &[ToolSpec], ctx: &SelectorContext<'_>, backend: &dyn Policy, params: &GenParams) -> Selection {
    match backend.complete(&selector_messages(tools, ctx), params) {
        Ok(c) => {
            let sel = parse_selection(&c.text, tools);
            if let Some(w) = &sel.warning {
                log::warn!("{w}");
            }
            sel
        }
        Err(e) => {
            log::warn!("selector backend failed, using all tools: {e}");
            Selection {
                tools: tools.to_vec(),
                fallback: true,
                warning: Some(format!("selector backend error: {e}")),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{BackendError, FailingPolicy, ScriptedPolicy};

    fn tools(n: usize) -> Vec<ToolSpec> {
        (1..=n)
            .map(|i| serde_json::from_str(&format!(r#"{{"name":"f{i}","description":"d"}}"#)).unwrap())
            .collect()
    }

    fn ctx() -> SelectorContext<'static> {
        SelectorContext {
            user_message: "do it",
            ..Default::default()
        }
    }

    #[test]
    fn three_valid_names() {
        let s = parse_selection("f1\nf2\nf3", &tools(5));
        assert_eq!(s.names(), ["f1", "f2", "f3"]);
        assert!(!s.fallback);
    }

    #[test]
    fn oversized_reply_is_clamped() {
        let reply = (1..=12).map(|i| format!("f{i}")).collect::<Vec<_>>().join("\n");
        let s = parse_selection(&reply, &tools(12));
        assert_eq!(s.tools.len(), 10);
        assert_eq!(s.tools[9].name, "f10");
    }

    #[test]
    fn too_few_valid_names_falls_back() {
        let s = parse_selection("bogus\nf1", &tools(5));
        assert!(s.fallback);
        assert_eq!(s.tools.len(), 5);
    }

    #[test]
    fn small_lists_need_fewer_names() {
        let s = parse_selection("f2", &tools(2));
        assert!(s.fallback);
        assert_eq!(s.names(), ["f1", "f2"]);
        let s = parse_selection("f1\nf2", &tools(2));
        assert!(!s.fallback);
    }

    #[test]
    fn bullets_numbers_and_duplicates() {
        let s = parse_selection("1. f1\n- f2\n* `f3`\nf1\n", &tools(4));
        assert_eq!(s.names(), ["f1", "f2", "f3"]);
    }

    #[test]
    fn backend_error_falls_back() {
        let s = select_tools(&tools(4), &ctx(), &FailingPolicy(BackendError::Timeout), &GenParams::default());
        assert!(s.fallback);
        assert_eq!(s.tools.len(), 4);
    }

    #[test]
    fn prompt_lists_every_function() {
        let m = selector_messages(&tools(3), &ctx());
        assert!(m[0].content.starts_with("You are a tool selector"));
        assert!(m[1].content.contains(r#""name":"f3""#));
        assert!(m[1].content.contains("[User Message]\ndo it"));
        assert!(m[1].content.ends_with("Selected Functions:"));
        let p = ScriptedPolicy::constant("f1\nf2\nf3");
        assert_eq!(select_tools(&tools(3), &ctx(), &p, &GenParams::default()).tools.len(), 3);
    }
}
