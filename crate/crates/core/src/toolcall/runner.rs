//! Multi-turn tool-calling episodes.

use std::collections::BTreeMap;

use super::editor::{edit_tool_call, EditOutcome};
use super::grammar::{parse_tool_calls, render_tool_calls};
use super::selector::{describe_tools, select_tools, SelectorContext};
use super::suite::{RelevanceExpected, ToolSuite};
use super::validate::{validate_batch, ValidationVerdict, VerdictCategory};
use super::world::{execute_calls, judge_turn, render_results};
use crate::model::{BatchRecord, EpisodeRecord, ExecutionResult, ExitReason, ToolCall, Trajectory, TurnRecord};
use crate::policy::{BackendHandle, ChatMessage, GenParams};
use crate::prompts;

pub const DEFAULT_MAX_BATCHES: usize = 8;

#[derive(Clone)]
pub struct ToolWiring {
    pub agent: BackendHandle,
    pub selector: Option<BackendHandle>,
    pub editor: Option<BackendHandle>,
}

impl ToolWiring {
    pub fn agent_only(agent: BackendHandle) -> Self {
        Self {
            agent,
            selector: None,
            editor: None,
        }
    }

    pub fn module_config(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("agent".into(), self.agent.label());
        if let Some(s) = &self.selector {
            m.insert("selector".into(), s.label());
        }
        if let Some(e) = &self.editor {
            m.insert("editor".into(), e.label());
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolLimits {
    /// Agent outputs allowed per user turn in multi-turn categories.
    pub max_batches_per_turn: usize,
    pub params: GenParams,
}

impl Default for ToolLimits {
    fn default() -> Self {
        Self {
            max_batches_per_turn: DEFAULT_MAX_BATCHES,
            params: GenParams::default(),
        }
    }
}

/// Judges whether an output correctly chose to call or not call a tool.
/// `None` when the suite carries no relevance expectation.
pub fn classify_relevance(expected: RelevanceExpected, output: &str) -> Option<bool> {
    let calls = parse_tool_calls(output.trim()).map(|c| c.len()).unwrap_or(0);
    match expected {
        RelevanceExpected::NotApplicable => None,
        RelevanceExpected::NoCallRequired => Some(calls == 0),
        RelevanceExpected::CallRequired => Some(calls > 0),
    }
}

pub fn toolcall_system_prompt(tools: &[crate::model::ToolSpec]) -> String {
    prompts::fill(prompts::TOOLCALL_SYSTEM, &[("function_descriptions", &describe_tools(tools))])
}

struct Totals {
    tokens: u64,
    wall: f64,
}

pub fn run_tool_episode(
    suite: &ToolSuite,
    wiring: &ToolWiring,
    limits: &ToolLimits,
    suite_name: &str,
    variant: &str,
    seed: u64,
) -> EpisodeRecord {
    let params = GenParams {
        seed: limits.params.seed.or(Some(seed)),
        ..limits.params.clone()
    };
    let single_shot = !suite.category.is_multi_turn();
    let max_batches = if single_shot { 1 } else { limits.max_batches_per_turn.max(1) };

    let mut world = suite.initial_world.clone();
    let mut golden_world = suite.initial_world.clone();
    let mut messages: Vec<ChatMessage> = vec![ChatMessage::system(String::new())];
    let mut totals = Totals { tokens: 0, wall: 0.0 };
    let mut turns: Vec<TurnRecord> = Vec::new();
    let mut error: Option<String> = None;
    let mut warnings: Vec<String> = Vec::new();
    let mut prev_calls: Option<String> = None;
    let mut prev_results: Option<String> = None;

    'turns: for (ti, st) in suite.turns.iter().enumerate() {
        let visible = suite.visible_tools(ti);
        let golden_flat: Vec<ToolCall> = st.turn.golden_calls.iter().flatten().cloned().collect();
        execute_calls(&golden_flat, &suite.tools, &mut golden_world);

        let mut record = TurnRecord {
            message: st.turn.message.clone(),
            selected_tools: None,
            batches: Vec::new(),
            success: false,
        };
        let offered = match &wiring.selector {
            Some(sel) => {
                let ctx = SelectorContext {
                    user_message: &st.turn.message,
                    previous_calls: prev_calls.as_deref(),
                    previous_results: prev_results.as_deref(),
                };
                let selection = select_tools(&visible, &ctx, sel.as_ref(), &params);
                record.selected_tools = Some(selection.names());
                warnings.extend(selection.warning.clone());
                selection.tools
            }
            None => visible.clone(),
        };
        messages[0] = ChatMessage::system(toolcall_system_prompt(&offered));
        messages.push(ChatMessage::user(st.turn.message.clone()));

        let mut executed: Vec<ExecutionResult> = Vec::new();
        let mut count_error = false;
        let mut first_output: Option<String> = None;

        for bi in 0..max_batches {
            let completion = match wiring.agent.complete(&messages, &params) {
                Ok(c) => c,
                Err(e) => {
                    error = Some(e.to_string());
                    turns.push(record);
                    break 'turns;
                }
            };
            totals.tokens += completion.generated_tokens;
            totals.wall += completion.wall_seconds;
            let raw = completion.text;
            let mut batch = BatchRecord {
                raw: raw.clone(),
                edited: None,
                calls: None,
                verdicts: Vec::new(),
                results: Vec::new(),
            };

            let effective: Option<String> = match &wiring.editor {
                Some(ed) => match edit_tool_call(&raw, ed.as_ref(), &params) {
                    EditOutcome::Unchanged => Some(raw.clone()),
                    EditOutcome::NoValidToolCalls => {
                        batch.edited = Some(EditOutcome::NoValidToolCalls.as_reply().to_string());
                        None
                    }
                    EditOutcome::Repaired(text) => {
                        batch.edited = Some(text.clone());
                        Some(text)
                    }
                },
                None => Some(raw.clone()),
            };
            if first_output.is_none() {
                first_output = Some(effective.clone().unwrap_or_default());
            }
            messages.push(ChatMessage::assistant(effective.clone().unwrap_or_else(|| raw.clone())));

            let Some(text) = effective else {
                record.batches.push(batch);
                break;
            };
            let calls = match parse_tool_calls(text.trim()) {
                Ok(c) => c,
                Err(e) => {
                    if bi == 0 && !golden_flat.is_empty() {
                        batch
                            .verdicts
                            .push(ValidationVerdict::new(VerdictCategory::ParseError, e.to_string()).to_log());
                    }
                    record.batches.push(batch);
                    break;
                }
            };
            if calls.is_empty() {
                batch.calls = Some("[]".into());
                record.batches.push(batch);
                break;
            }
            batch.calls = Some(render_tool_calls(&calls));
            let expected = suite
                .category
                .checks_call_count()
                .then(|| st.turn.golden_calls.get(bi).map(Vec::len))
                .flatten();
            let verdicts = validate_batch(&calls, &visible, expected);
            count_error |= verdicts.iter().any(|v| v.category == VerdictCategory::CallCountError);
            batch.verdicts = verdicts.iter().map(ValidationVerdict::to_log).collect();

            let results = execute_calls(&calls, &visible, &mut world);
            let rendered = render_results(&results);
            batch.results = rendered.lines().map(str::to_string).collect();
            prev_calls = batch.calls.clone();
            prev_results = Some(rendered.clone());
            executed.extend(results);
            record.batches.push(batch);
            if !single_shot {
                messages.push(ChatMessage::user(format!("Execution results:\n{rendered}")));
            }
        }

        record.success = match classify_relevance(suite.relevance_expected, first_output.as_deref().unwrap_or("")) {
            Some(correct) => correct,
            None => !count_error && judge_turn(&world, &golden_world, &executed, &golden_flat),
        };
        turns.push(record);
    }

    let solved = turns.iter().filter(|t| t.success).count();
    let total = suite.turns.len().max(1);
    let success = error.is_none() && solved == suite.turns.len();
    let exit_reason = match (&error, success) {
        (Some(_), _) => ExitReason::BackendError,
        (None, true) => ExitReason::Goal,
        (None, false) => ExitReason::Completed,
    };
    EpisodeRecord {
        task_id: suite.id.clone(),
        suite: suite_name.to_string(),
        variant: variant.to_string(),
        seed,
        steps: Trajectory::new(),
        turns,
        success,
        progress: solved as f64 / total as f64,
        generated_tokens: totals.tokens,
        wall_seconds: totals.wall,
        module_config: wiring.module_config(),
        exit_reason,
        error,
        warnings,
    }
}
