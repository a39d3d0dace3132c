use std::path::Path;
use std::sync::Arc;

use agent_harness::envs::{load_embodied_suite, EmbodiedTask};
use agent_harness::model::ExitReason;
use agent_harness::policy::{BackendHandle, PolicyScript, Recorder, ScriptRule, ScriptedPolicy};
use agent_harness::react::{run_episode, ModuleWiring, ReactLimits};
use proptest::prelude::*;

const IDLE: &str = "Thought: check my hands\nAction: inventory";

fn tidy() -> EmbodiedTask {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/early_exit_house.json");
    load_embodied_suite(&path).unwrap().tasks.remove(0)
}

fn constant(text: &str) -> BackendHandle {
    Arc::new(ScriptedPolicy::constant(text))
}

/// Raw steps shown after the memory line of an agent prompt.
fn raw_steps(prompt: &str) -> usize {
    let tail = &prompt[prompt.find("Memory: ").expect("memory line")..];
    tail.matches("\nObservation: ").count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn memory_refreshes_every_k_steps(k in 2u32..=8, steps in 1u32..=40, retain in 1usize..4) {
        let agent = Recorder::new(constant(IDLE));
        let memory = Recorder::new(constant("Nothing in hand so far."));
        let wiring = ModuleWiring { agent: agent.clone(), memory: Some(memory.clone()), verifier: None };
        let limits = ReactLimits { k_mem: k, retain_last: retain, step_limit: Some(steps), ..ReactLimits::default() };
        let rec = run_episode(&tidy(), 7, &wiring, &limits, "tidy", "agent+memory").unwrap();
        prop_assert_eq!(rec.steps.len(), steps as usize);
        prop_assert_eq!(memory.call_count(), (steps / k) as usize);
        for (i, call) in agent.calls().iter().enumerate() {
            prop_assert_eq!(raw_steps(&call.messages[1].content), retain.min(i));
        }
    }

    #[test]
    fn early_exit_only_at_multiples_of_k(k in 1u32..=8, steps in 1u32..=30, exit_at in 1u32..=6) {
        // a verifier that always says continue never ends the episode
        let verifier = Recorder::new(constant("0"));
        let wiring = ModuleWiring { agent: constant(IDLE), memory: None, verifier: Some(verifier.clone()) };
        let limits = ReactLimits { k_earlyexit: k, step_limit: Some(steps), ..ReactLimits::default() };
        let rec = run_episode(&tidy(), 1, &wiring, &limits, "tidy", "agent+verifier").unwrap();
        prop_assert_eq!(rec.steps.len(), steps as usize);
        prop_assert_eq!(rec.exit_reason, ExitReason::StepLimit);
        prop_assert_eq!(verifier.call_count(), (steps / k) as usize);

        // one that always says exit stops at the first check
        let wiring = ModuleWiring { agent: constant(IDLE), memory: None, verifier: Some(constant("1")) };
        let rec = run_episode(&tidy(), 1, &wiring, &limits, "tidy", "agent+verifier").unwrap();
        if k <= steps {
            prop_assert_eq!(rec.steps.len(), k as usize);
            prop_assert_eq!(rec.exit_reason, ExitReason::EarlyExit);
        } else {
            prop_assert_eq!(rec.exit_reason, ExitReason::StepLimit);
        }

        // one that says exit from a given step on stops at the next multiple of k
        let exit_step = exit_at.div_ceil(k) * k;
        // the history holds one Action line per step
        let rule = ScriptRule::regex(format!(r"(?s)(?:Action: .*){{{exit_at}}}"), "1");
        let late = Arc::new(ScriptedPolicy::new("late", PolicyScript::new("0").rule(rule)).unwrap());
        let wiring = ModuleWiring { agent: constant(IDLE), memory: None, verifier: Some(late) };
        let rec = run_episode(&tidy(), 1, &wiring, &limits, "tidy", "agent+verifier").unwrap();
        if exit_step <= steps {
            prop_assert_eq!(rec.exit_reason, ExitReason::EarlyExit);
            prop_assert_eq!(rec.steps.len() as u32 % k, 0);
            prop_assert_eq!(rec.steps.len() as u32, exit_step);
        } else {
            prop_assert_eq!(rec.steps.len(), steps as usize);
        }
    }

    #[test]
    fn episodes_without_memory_are_deterministic(seed in any::<u64>(), actions in prop::collection::vec(
        prop::sample::select(vec!["go to desk 1", "go to drawer 1", "open drawer 1", "take pen from desk 1", "look", "inventory"]),
        1..12,
    )) {
        let pairs: Vec<(&str, &str)> = actions.iter().map(|a| ("next", *a)).collect();
        let run = || {
            let agent: BackendHandle = Arc::new(ScriptedPolicy::new("replay", PolicyScript::replay(&pairs)).unwrap());
            let rec = run_episode(&tidy(), seed, &ModuleWiring::agent_only(agent), &ReactLimits::default(), "tidy", "agent").unwrap();
            serde_json::to_string(&rec).unwrap()
        };
        prop_assert_eq!(run(), run());
    }
}
