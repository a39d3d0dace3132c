mod common;

use std::collections::BTreeMap;

use agent_harness::model::{validate_record, EpisodeRecord, ExitReason, Trajectory, Value};
use indexmap::IndexMap;
use proptest::prelude::*;

fn exit_reason() -> impl Strategy<Value = ExitReason> {
    prop_oneof![
        Just(ExitReason::Goal),
        Just(ExitReason::Completed),
        Just(ExitReason::StepLimit),
        Just(ExitReason::EarlyExit),
        Just(ExitReason::BackendError),
    ]
}

fn record() -> impl Strategy<Value = EpisodeRecord> {
    (
        ("[a-z0-9-]{1,8}", "[a-z]{0,6}", "[a-z+]{0,12}", any::<u64>()),
        prop::collection::vec(("\\PC{0,20}", "[a-z][a-z ]{0,11}", "\\PC{0,30}"), 0..6),
        (any::<bool>(), 0.0f64..=1.0, any::<u64>(), 0.0f64..1e6),
        prop::collection::btree_map("[a-z_]{1,8}", "[a-z0-9:]{0,8}", 0..4),
        (exit_reason(), prop::option::of("\\PC{0,20}"), prop::collection::vec("\\PC{0,20}", 0..3)),
    )
        .prop_map(|((task_id, suite, variant, seed), steps, (success, progress, tokens, wall), cfg, (exit, error, warnings))| {
            let mut t = Trajectory::new();
            for (thought, action, obs) in steps {
                t.push(thought, action, obs);
            }
            EpisodeRecord {
                task_id,
                suite,
                variant,
                seed,
                steps: t,
                turns: vec![],
                success,
                progress: if success { 1.0 } else { progress },
                generated_tokens: tokens,
                wall_seconds: wall,
                module_config: cfg.into_iter().collect::<BTreeMap<_, _>>(),
                exit_reason: exit,
                error,
                warnings,
            }
        })
}

proptest! {
    #[test]
    fn records_survive_json(r in record()) {
        let line = serde_json::to_string(&r).unwrap();
        prop_assert!(!line.contains('\n'));
        let back: EpisodeRecord = serde_json::from_str(&line).unwrap();
        prop_assert_eq!(back, r);
    }

    #[test]
    fn values_survive_json(v in common::value(3)) {
        let back: Value = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        prop_assert_eq!(back, v);
    }

    #[test]
    fn generated_records_are_well_formed(r in record()) {
        prop_assert_eq!(validate_record(&r), Vec::<String>::new());
    }

    #[test]
    fn success_needs_full_progress(mut r in record(), p in 0.0f64..0.999) {
        r.success = true;
        r.progress = p;
        prop_assert!(validate_record(&r).iter().any(|v| v == "success requires progress=1.0"));
    }

    #[test]
    fn out_of_range_progress_flagged(mut r in record(), p in prop_oneof![-10.0f64..-1e-9, 1.000001f64..10.0]) {
        r.success = false;
        r.progress = p;
        prop_assert!(!validate_record(&r).is_empty());
    }

    #[test]
    fn pushed_steps_are_contiguous(n in 0usize..30) {
        let mut t = Trajectory::new();
        for i in 0..n {
            t.push("", format!("a{i}"), "");
        }
        let idx: Vec<u32> = t.steps.iter().map(|s| s.index).collect();
        prop_assert_eq!(idx, (1..=n as u32).collect::<Vec<_>>());
        prop_assert!(t.violations().is_empty());
    }

    #[test]
    fn map_order_is_ignored(entries in prop::collection::btree_map("[a-z]{1,4}", common::value(2), 0..6)) {
        let forward: IndexMap<String, Value> = entries.clone().into_iter().collect();
        let backward: IndexMap<String, Value> = entries.into_iter().rev().collect();
        prop_assert_eq!(Value::Map(forward), Value::Map(backward));
    }

    #[test]
    fn list_order_matters(items in prop::collection::btree_set(any::<i64>(), 2..6)) {
        let forward: Vec<Value> = items.iter().copied().map(Value::Int).collect();
        let backward: Vec<Value> = forward.iter().rev().cloned().collect();
        prop_assert_ne!(Value::List(forward), Value::List(backward));
    }
}

#[test]
fn python_and_json_literals_agree() {
    use agent_harness::toolcall::parse_value;
    for (py, json) in [("True", "true"), ("False", "false"), ("None", "null")] {
        assert_eq!(parse_value(py).unwrap(), parse_value(json).unwrap());
    }
}
