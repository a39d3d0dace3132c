//! ReAct loop for embodied tasks, with the optional memory and early-exit
//! modules.
//!
//! Each step renders one prompt (task context, history view, valid
//! actions), asks the agent for a `Thought:`/`Action:` pair, and feeds the
//! action to the environment. The memory module replaces the full history
//! with a running summary plus the last few raw steps; the early-exit
//! module periodically asks a verifier whether the agent is stuck.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::envs::{EmbodiedTask, EnvError, EnvSession};
use crate::model::{EpisodeRecord, ExitReason, Step, TaskSpec, Trajectory};
use crate::policy::{BackendError, BackendHandle, ChatMessage, GenParams, Policy};
use crate::prompts;

pub const DEFAULT_K_MEM: u32 = 5;
pub const DEFAULT_RETAIN_LAST: usize = 2;
pub const DEFAULT_K_EARLYEXIT: u32 = 5;

/// Placeholder for an empty memory or an empty agent reply.
pub const EMPTY: &str = "(empty)";

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryState {
    pub text: String,
    /// Step at which the memory was last refreshed; 0 before the first.
    pub last_refresh_step: u32,
    pub k_mem: u32,
    pub retain_last: usize,
}

impl MemoryState {
    pub fn new(k_mem: u32, retain_last: usize) -> Self {
        Self {
            text: String::new(),
            last_refresh_step: 0,
            k_mem,
            retain_last,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifierConfig {
    pub k_earlyexit: u32,
    pub enabled: bool,
}

#[derive(Clone)]
pub struct ModuleWiring {
    pub agent: BackendHandle,
    pub memory: Option<BackendHandle>,
    pub verifier: Option<BackendHandle>,
}

impl ModuleWiring {
    pub fn agent_only(agent: BackendHandle) -> Self {
        Self {
            agent,
            memory: None,
            verifier: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactLimits {
    pub k_mem: u32,
    pub retain_last: usize,
    pub k_earlyexit: u32,
    pub params: GenParams,
    /// Overrides the task's own step limit when set.
    pub step_limit: Option<u32>,
}

impl Default for ReactLimits {
    fn default() -> Self {
        Self {
            k_mem: DEFAULT_K_MEM,
            retain_last: DEFAULT_RETAIN_LAST,
            k_earlyexit: DEFAULT_K_EARLYEXIT,
            params: GenParams::default(),
            step_limit: None,
        }
    }
}

/// What the agent sees of its own past.
#[derive(Debug, Clone, Copy)]
pub enum HistoryView<'a> {
    Full(&'a [Step]),
    Memory { memory: &'a str, recent: &'a [Step] },
}

pub fn render_steps(steps: &[Step]) -> String {
    steps
        .iter()
        .map(|s| format!("Thought: {}\nAction: {}\nObservation: {}", s.thought, s.action, s.observation))
        .collect::<Vec<_>>()
        .join("\n")
}

fn render_view(view: HistoryView<'_>) -> String {
    match view {
        HistoryView::Full(steps) => render_steps(steps),
        HistoryView::Memory { memory, recent } => {
            let memory = if memory.trim().is_empty() { EMPTY } else { memory };
            let mut out = format!("Memory: {memory}");
            if !recent.is_empty() {
                out.push_str("\n\n");
                out.push_str(&render_steps(recent));
            }
            out
        }
    }
}

/// Agent prompt for the next step.
pub fn build_prompt(
    task: &TaskSpec,
    init_observation: &str,
    view: HistoryView<'_>,
    valid_actions: &[String],
) -> Vec<ChatMessage> {
    let history = render_view(view);
    let history = if history.is_empty() {
        String::new()
    } else {
        format!("\n{history}\n")
    };
    let actions = valid_actions.join(", ");
    let user = prompts::fill(
        prompts::REACT_USER,
        &[
            ("task_instruction", &task.instruction),
            ("example", &task.exemplar),
            ("task_goal", &task.goal),
            ("init_observation", init_observation),
            ("interaction_history", &history),
            ("valid_actions", &actions),
        ],
    );
    vec![
        ChatMessage::system(prompts::text(prompts::REACT_SYSTEM)),
        ChatMessage::user(user),
    ]
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no \"Action:\" line in agent output")]
pub struct ReactParseError;

/// Splits an agent reply into (thought, action).
///
/// Takes the first `Thought:` and the first `Action:` after it; the action
/// is the rest of that line. A reply without a thought is accepted.
pub fn parse_react(text: &str) -> Result<(String, String), ReactParseError> {
    let thought_at = text.find("Thought:");
    let search_from = thought_at.map(|i| i + "Thought:".len()).unwrap_or(0);
    let action_at = text[search_from..]
        .find("Action:")
        .map(|i| i + search_from)
        .ok_or(ReactParseError)?;
    let thought = match thought_at {
        Some(i) => text[i + "Thought:".len()..action_at].trim().to_string(),
        None => String::new(),
    };
    let rest = &text[action_at + "Action:".len()..];
    let action = rest.lines().next().unwrap_or("").trim().to_string();
    if action.is_empty() {
        return Err(ReactParseError);
    }
    Ok((thought, action))
}

/// Memory refreshes when `k_mem` steps have passed since the last one.
pub fn should_invoke_memory(t: u32, mem: &MemoryState) -> bool {
    mem.k_mem > 0 && t.saturating_sub(mem.last_refresh_step) >= mem.k_mem
}

pub fn should_invoke_verifier(t: u32, cfg: &VerifierConfig) -> bool {
    cfg.enabled && cfg.k_earlyexit > 0 && t > 0 && t % cfg.k_earlyexit == 0
}

pub fn memory_messages(previous: &str, recent: &[Step]) -> Vec<ChatMessage> {
    let system = prompts::fill(
        prompts::MEMORY_SYSTEM,
        &[("exemplars", prompts::text(prompts::MEMORY_EXEMPLARS))],
    );
    let previous = if previous.trim().is_empty() { EMPTY } else { previous };
    let user = prompts::fill(
        prompts::MEMORY_USER,
        &[("previous_memory", previous), ("recent_steps", &render_steps(recent))],
    );
    vec![ChatMessage::system(system), ChatMessage::user(user)]
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryUpdate {
    pub state: MemoryState,
    pub warning: Option<String>,
    pub generated_tokens: u64,
}

/// Summarizes `recent` into the memory at step `t`.
///
/// An empty summary keeps the previous text and reports a warning.
pub fn update_memory(
    mem: &MemoryState,
    recent: &[Step],
    t: u32,
    backend: &dyn Policy,
    params: &GenParams,
) -> Result<MemoryUpdate, BackendError> {
    let completion = backend.complete(&memory_messages(&mem.text, recent), params)?;
    let mut state = mem.clone();
    state.last_refresh_step = t;
    let summary = completion.text.trim();
    let warning = if summary.is_empty() {
        Some(format!("step {t}: memory summary was empty, keeping previous memory"))
    } else {
        state.text = summary.to_string();
        None
    };
    Ok(MemoryUpdate {
        state,
        warning,
        generated_tokens: completion.generated_tokens,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Exit,
    Continue,
    /// Reply was not a recognisable 1/0; treated as continue.
    Unparsed,
}

impl Verdict {
    pub fn parse(text: &str) -> Verdict {
        let first = text
            .split_whitespace()
            .next()
            .unwrap_or("")
            .trim_matches(|c: char| !c.is_ascii_alphanumeric())
            .to_ascii_lowercase();
        match first.as_str() {
            "1" | "yes" | "true" => Verdict::Exit,
            "0" | "no" | "false" => Verdict::Continue,
            _ => Verdict::Unparsed,
        }
    }

    pub fn exits(self) -> bool {
        self == Verdict::Exit
    }
}

pub fn verifier_messages(task: &TaskSpec, steps: &[Step]) -> Vec<ChatMessage> {
    let user = prompts::fill(
        prompts::EARLY_EXIT_USER,
        &[
            ("task_instruction", &task.instruction),
            ("task_goal", &task.goal),
            ("interaction_history", &render_steps(steps)),
            ("early_exit_instruction", prompts::text(prompts::EARLY_EXIT_INSTRUCTION)),
        ],
    );
    vec![
        ChatMessage::system(prompts::text(prompts::EARLY_EXIT_SYSTEM)),
        ChatMessage::user(user),
    ]
}

pub fn verify_early_exit(
    steps: &[Step],
    task: &TaskSpec,
    backend: &dyn Policy,
    params: &GenParams,
) -> Result<Verdict, BackendError> {
    let completion = backend.complete(&verifier_messages(task, steps), params)?;
    Ok(Verdict::parse(&completion.text))
}

pub fn module_config(wiring: &ModuleWiring, limits: &ReactLimits) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("agent".into(), wiring.agent.label());
    if let Some(b) = &wiring.memory {
        m.insert("memory".into(), b.label());
        m.insert("k_mem".into(), limits.k_mem.to_string());
        m.insert("retain_last".into(), limits.retain_last.to_string());
    }
    if let Some(b) = &wiring.verifier {
        m.insert("verifier".into(), b.label());
        m.insert("k_earlyexit".into(), limits.k_earlyexit.to_string());
    }
    m.insert("prompts".into(), prompts::TEMPLATE_VERSION.into());
    m
}

/// Plays one embodied episode to the goal, the step limit, an early exit
/// or the first agent backend error.
///
/// Token and time totals cover the agent backend only.
pub fn run_episode(
    task: &EmbodiedTask,
    seed: u64,
    wiring: &ModuleWiring,
    limits: &ReactLimits,
    suite_name: &str,
    variant: &str,
) -> Result<EpisodeRecord, EnvError> {
    let spec = task.spec();
    let (mut session, init) = EnvSession::reset(task, seed)?;
    let step_limit = limits.step_limit.unwrap_or(task.step_limit).max(1);
    let params = GenParams {
        seed: limits.params.seed.or(Some(seed)),
        ..limits.params.clone()
    };
    let verifier_cfg = VerifierConfig {
        k_earlyexit: limits.k_earlyexit,
        enabled: wiring.verifier.is_some(),
    };
    let mut memory = MemoryState::new(limits.k_mem, limits.retain_last);
    let mut traj = Trajectory::new();
    let mut warnings: Vec<String> = Vec::new();
    let mut error: Option<String> = None;
    let mut tokens = 0u64;
    let mut wall = 0.0f64;
    let mut exit_reason = ExitReason::StepLimit;

    if init.done {
        exit_reason = ExitReason::Goal;
    }
    let mut t = 0u32;
    while exit_reason == ExitReason::StepLimit && t < step_limit {
        t += 1;
        if let Some(backend) = &wiring.memory {
            if should_invoke_memory(t, &memory) {
                let from = memory.last_refresh_step.max(1) as usize;
                let recent = &traj.steps[from - 1..(t as usize - 1)];
                if !recent.is_empty() {
                    match update_memory(&memory, recent, t, backend.as_ref(), &params) {
                        Ok(update) => {
                            warnings.extend(update.warning);
                            memory = update.state;
                        }
                        Err(e) => {
                            warnings.push(format!("step {t}: memory backend error, keeping previous memory: {e}"));
                            memory.last_refresh_step = t;
                        }
                    }
                }
            }
        }

        let view = if wiring.memory.is_some() {
            HistoryView::Memory {
                memory: &memory.text,
                recent: traj.last_n(memory.retain_last),
            }
        } else {
            HistoryView::Full(&traj.steps)
        };
        let messages = build_prompt(&spec, &init.text, view, &session.valid_actions());
        let completion = match wiring.agent.complete(&messages, &params) {
            Ok(c) => c,
            Err(e) => {
                error = Some(e.to_string());
                exit_reason = ExitReason::BackendError;
                break;
            }
        };
        tokens += completion.generated_tokens;
        wall += completion.wall_seconds;

        let (thought, action) = match parse_react(&completion.text) {
            Ok(pair) => pair,
            Err(_) => {
                let raw = completion.text.trim();
                (String::new(), if raw.is_empty() { EMPTY.to_string() } else { raw.to_string() })
            }
        };
        let obs = session.step(&action);
        traj.push(thought, action, obs.text);
        if obs.done {
            exit_reason = ExitReason::Goal;
            break;
        }

        if let Some(backend) = &wiring.verifier {
            if should_invoke_verifier(t, &verifier_cfg) {
                match verify_early_exit(&traj.steps, &spec, backend.as_ref(), &params) {
                    Ok(Verdict::Exit) => exit_reason = ExitReason::EarlyExit,
                    Ok(Verdict::Continue) => {}
                    Ok(Verdict::Unparsed) => {
                        warnings.push(format!("step {t}: verifier reply not understood, continuing"))
                    }
                    Err(e) => warnings.push(format!("step {t}: verifier backend error, continuing: {e}")),
                }
            }
        }
    }
    for w in &warnings {
        log::warn!("{}: {w}", task.id);
    }

    Ok(EpisodeRecord {
        task_id: task.id.clone(),
        suite: suite_name.to_string(),
        variant: variant.to_string(),
        seed,
        steps: traj,
        turns: Vec::new(),
        success: session.is_done(),
        progress: session.progress(),
        generated_tokens: tokens,
        wall_seconds: wall,
        module_config: module_config(wiring, limits),
        exit_reason,
        error,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::policy::{FailingPolicy, PolicyScript, Recorder, ScriptedPolicy};

    fn lamp_task(step_limit: u32) -> EmbodiedTask {
        serde_json::from_value(serde_json::json!({
            "id": "lamp",
            "instruction": "Interact with a household.",
            "goal": "look at bowl under the desklamp",
            "env_name": "texthouse",
            "step_limit": step_limit,
            "world": {"type": "texthouse", "usable": ["desklamp"], "locations": [
                {"name": "desk 1", "objects": ["desklamp"]},
                {"name": "desk 2", "objects": ["bowl"]}]},
            "subgoals": [
                {"id": "lamp", "predicate": {"seen": "desklamp"}},
                {"id": "bowl", "predicate": {"holding": "bowl"}},
                {"id": "look", "predicate": {"all_of": [{"holding": "bowl"}, {"used": "desklamp"}]}}]
        }))
        .unwrap()
    }

    fn constant(text: &str) -> BackendHandle {
        Arc::new(ScriptedPolicy::constant(text))
    }

    fn history_actions(prompt: &str) -> usize {
        let history = prompt.split("Your task is:").nth(1).unwrap();
        history.matches("\nAction: ").count()
    }

    #[test]
    fn parses_thought_and_action() {
        assert_eq!(
            parse_react("Thought: look around\nAction: go to desk 1\nextra").unwrap(),
            ("look around".to_string(), "go to desk 1".to_string())
        );
        assert_eq!(parse_react("Action: open drawer 1").unwrap().1, "open drawer 1");
        assert_eq!(parse_react("Thought: hmm"), Err(ReactParseError));
        assert_eq!(parse_react("Thought: a\nAction:   \n"), Err(ReactParseError));
    }

    #[test]
    fn verdicts() {
        assert_eq!(Verdict::parse("1"), Verdict::Exit);
        assert_eq!(Verdict::parse(" 0.\n"), Verdict::Continue);
        assert_eq!(Verdict::parse("Yes, it is stuck"), Verdict::Exit);
        assert_eq!(Verdict::parse("maybe"), Verdict::Unparsed);
        assert_eq!(Verdict::parse(""), Verdict::Unparsed);
    }

    #[test]
    fn cadence() {
        let mut m = MemoryState::new(5, 2);
        assert!(!should_invoke_memory(4, &m));
        assert!(should_invoke_memory(5, &m));
        m.last_refresh_step = 5;
        assert!(!should_invoke_memory(9, &m));
        assert!(should_invoke_memory(10, &m));
        let v = VerifierConfig { k_earlyexit: 4, enabled: true };
        assert!(should_invoke_verifier(8, &v));
        assert!(!should_invoke_verifier(6, &v));
        assert!(!should_invoke_verifier(8, &VerifierConfig { enabled: false, ..v }));
    }

    #[test]
    fn prompt_layout() {
        let task = lamp_task(10).spec();
        let mut traj = Trajectory::new();
        traj.push("t1", "go to desk 1", "On the desk 1, you see a desklamp 1.");
        let msgs = build_prompt(&task, "INIT", HistoryView::Full(&traj.steps), &["a".into(), "b".into()]);
        assert_eq!(msgs.len(), 2);
        assert!(msgs[1].content.ends_with(
            "Your task is: look at bowl under the desklamp\nINIT\n\nThought: t1\nAction: go to desk 1\n\
             Observation: On the desk 1, you see a desklamp 1.\n\nThe next action could be chosen from these valid actions: a, b"
        ));
        let empty = build_prompt(&task, "INIT", HistoryView::Full(&[]), &[]);
        assert!(empty[1].content.contains("INIT\n\nThe next action"));
        let mem = build_prompt(&task, "INIT", HistoryView::Memory { memory: "", recent: &traj.steps }, &[]);
        assert!(mem[1].content.contains("INIT\n\nMemory: (empty)\n\nThought: t1\n"));
    }

    #[test]
    fn replay_reaches_goal() {
        let script = PolicyScript::replay(&[
            ("find the lamp", "go to desk 1"),
            ("now the bowl", "go to desk 2"),
            ("take it", "take bowl from desk 2"),
            ("back", "go to desk 1"),
            ("light", "use desklamp"),
        ]);
        let agent: BackendHandle = Arc::new(ScriptedPolicy::new("replay", script).unwrap());
        let rec = run_episode(&lamp_task(10), 7, &ModuleWiring::agent_only(agent), &ReactLimits::default(), "s", "v")
            .unwrap();
        assert_eq!(rec.exit_reason, ExitReason::Goal);
        assert!(rec.success);
        assert_eq!(rec.progress, 1.0);
        assert_eq!(rec.steps.actions(), vec!["go to desk 1", "go to desk 2", "take bowl from desk 2", "go to desk 1", "use desklamp"]);
        assert!(crate::model::validate_record(&rec).is_empty());
    }

    #[test]
    fn memory_called_on_schedule_and_window_is_fixed() {
        let agent = Recorder::new(constant("Thought: wait\nAction: inventory"));
        let memory = Recorder::new(constant("The agent checked its inventory."));
        let wiring = ModuleWiring {
            agent: agent.clone(),
            memory: Some(memory.clone()),
            verifier: None,
        };
        let rec = run_episode(&lamp_task(23), 1, &wiring, &ReactLimits::default(), "s", "v").unwrap();
        assert_eq!(rec.steps.len(), 23);
        assert_eq!(rec.exit_reason, ExitReason::StepLimit);
        assert_eq!(memory.call_count(), 4);
        let calls = agent.calls();
        assert_eq!(calls.len(), 23);
        for (i, call) in calls.iter().enumerate().skip(2) {
            assert_eq!(history_actions(&call.messages[1].content), 2, "prompt {}", i + 1);
        }
        // the first refresh summarises steps 1..4, the second steps 5..9
        let mem_calls = memory.calls();
        assert_eq!(mem_calls[0].messages[1].content.matches("Action: inventory").count(), 4);
        assert_eq!(mem_calls[1].messages[1].content.matches("Action: inventory").count(), 5);
        assert!(calls[5].messages[1].content.contains("Memory: The agent checked its inventory."));
    }

    #[test]
    fn empty_summary_keeps_memory() {
        let mem = MemoryState { text: "old".into(), ..MemoryState::new(5, 2) };
        let mut traj = Trajectory::new();
        traj.push("", "look", "nothing");
        let up = update_memory(&mem, &traj.steps, 5, &ScriptedPolicy::constant("  "), &GenParams::default()).unwrap();
        assert_eq!(up.state.text, "old");
        assert_eq!(up.state.last_refresh_step, 5);
        assert!(up.warning.is_some());
    }

    #[test]
    fn verifier_exits_early() {
        let wiring = ModuleWiring {
            agent: constant("Thought: wait\nAction: inventory"),
            memory: None,
            verifier: Some(constant("1")),
        };
        let limits = ReactLimits { k_earlyexit: 4, ..ReactLimits::default() };
        let rec = run_episode(&lamp_task(20), 1, &wiring, &limits, "s", "v").unwrap();
        assert_eq!(rec.exit_reason, ExitReason::EarlyExit);
        assert_eq!(rec.steps.len(), 4);
        assert!(!rec.success);
    }

    #[test]
    fn garbled_output_goes_to_env() {
        let rec = run_episode(
            &lamp_task(2),
            1,
            &ModuleWiring::agent_only(constant("")),
            &ReactLimits::default(),
            "s",
            "v",
        )
        .unwrap();
        assert_eq!(rec.steps.actions(), vec![EMPTY, EMPTY]);
        assert_eq!(rec.exit_reason, ExitReason::StepLimit);
    }

    #[test]
    fn backend_error_ends_episode() {
        let agent: BackendHandle = Arc::new(FailingPolicy(BackendError::Timeout));
        let rec = run_episode(&lamp_task(5), 1, &ModuleWiring::agent_only(agent), &ReactLimits::default(), "s", "v")
            .unwrap();
        assert_eq!(rec.exit_reason, ExitReason::BackendError);
        assert!(rec.steps.is_empty());
        assert!(rec.error.is_some());
    }
}
