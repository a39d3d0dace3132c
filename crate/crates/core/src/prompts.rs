//! Prompt templates, compiled in from `assets/prompts/`.
//!
//! Templates use `{name}` placeholders. Substitution is single-pass, so
//! substituted text is never re-scanned for placeholders.

pub const REACT_SYSTEM: &str = include_str!("../assets/prompts/react_system.txt");
pub const REACT_USER: &str = include_str!("../assets/prompts/react_user.txt");
pub const MEMORY_SYSTEM: &str = include_str!("../assets/prompts/memory_system.txt");
pub const MEMORY_EXEMPLARS: &str = include_str!("../assets/prompts/memory_exemplars.txt");
pub const MEMORY_USER: &str = include_str!("../assets/prompts/memory_user.txt");
pub const EARLY_EXIT_SYSTEM: &str = include_str!("../assets/prompts/early_exit_system.txt");
pub const EARLY_EXIT_USER: &str = include_str!("../assets/prompts/early_exit_user.txt");
pub const EARLY_EXIT_INSTRUCTION: &str = include_str!("../assets/prompts/early_exit_instruction.txt");
pub const TOOLCALL_SYSTEM: &str = include_str!("../assets/prompts/toolcall_system.txt");
pub const SELECTOR_SYSTEM: &str = include_str!("../assets/prompts/selector_system.txt");
pub const SELECTOR_USER: &str = include_str!("../assets/prompts/selector_user.txt");
pub const EDITOR_SYSTEM: &str = include_str!("../assets/prompts/editor_system.txt");
pub const EDITOR_USER: &str = include_str!("../assets/prompts/editor_user.txt");

/// Version tag recorded in episode logs so transcripts can be tied to the
/// template set that produced them.
pub const TEMPLATE_VERSION: &str = "1";

/// Fills `{key}` placeholders. Unknown placeholders and other braces are
/// left untouched. The template's trailing newline is dropped.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let template = template.strip_suffix('\n').unwrap_or(template);
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let key_len = after
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(after.len());
        let key = &after[..key_len];
        let closes = after[key_len..].starts_with('}');
        match vars.iter().find(|(k, _)| *k == key) {
            Some((_, value)) if closes && key_len > 0 => {
                out.push_str(value);
                rest = &after[key_len + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Trims the template's trailing newline without substituting anything.
pub fn text(template: &str) -> &str {
    template.strip_suffix('\n').unwrap_or(template)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_is_single_pass() {
        let out = fill("a {x} b {y} {z}", &[("x", "{y}"), ("y", "Y")]);
        assert_eq!(out, "a {y} b Y {z}");
    }

    #[test]
    fn json_braces_survive() {
        let out = fill(r#"{"cd": {}} {k}"#, &[("k", "v")]);
        assert_eq!(out, r#"{"cd": {}} v"#);
    }

    #[test]
    fn templates_carry_fixed_phrases() {
        assert!(REACT_USER.contains("Thought: <your thoughts>\nAction: <your next action>"));
        assert!(REACT_USER.contains("The next action could be chosen from these valid actions: "));
        assert!(MEMORY_SYSTEM.starts_with("You are a memory updater."));
        assert!(SELECTOR_SYSTEM.contains("no more than 10 functions"));
        assert!(EDITOR_SYSTEM.contains("NO_VALID_TOOL_CALLS"));
        assert!(TOOLCALL_SYSTEM.contains("[func_name1(params_name1=params_value1, params_name2=params_value2...), func_name2(params)]"));
    }
}
