//! Operational shell: configuration, suite loading and sampling, the
//! episode worker pool, persistence and reports.

pub mod config;
pub mod run;
pub mod suites;

pub use config::{build_backend, load_config, BackendConfig, ConfigError, RunConfig};
pub use run::{ablation_grid, read_records, report_file, run, write_report, RunError, RunOutcome, Variant};
pub use suites::{load_manifest, load_suite_path, sample_suite, InstanceRef, Sample, SuiteManifest, SuiteSet};

#[cfg(test)]
mod tests {
    use std::path::Path;

    use super::*;

    const HOUSE: &str = r#"{"kind": "embodied", "name": "house", "tasks": [
        {"id": "lamp", "instruction": "Interact with a household.", "goal": "find the lamp",
         "env_name": "texthouse", "step_limit": 6,
         "world": {"type": "texthouse", "locations": [{"name": "desk 1", "objects": ["desklamp"]}]},
         "subgoals": [{"id": "lamp", "predicate": {"seen": "desklamp"}}]},
        {"id": "stuck", "instruction": "Interact with a household.", "goal": "find the bowl",
         "env_name": "texthouse", "step_limit": 6,
         "world": {"type": "texthouse", "locations": [{"name": "desk 1", "objects": ["bowl"]}]},
         "subgoals": [{"id": "bowl", "predicate": {"holding": "bowl"}}]}]}"#;

    const TOOLS: &str = r#"{"kind": "toolcall", "name": "tools", "instances": [
        {"id": "t0", "category": "simple", "tools": [{"name": "f", "description": "d",
          "parameters": {"type": "dict", "properties": {}, "required": []}}],
         "turns": [{"message": "call f", "golden_calls": ["[f()]"]}]}]}"#;

    fn setup(dir: &Path, extra: &str) -> RunConfig {
        std::fs::write(dir.join("house.json"), HOUSE).unwrap();
        std::fs::write(dir.join("tools.json"), TOOLS).unwrap();
        std::fs::write(
            dir.join("agent.json"),
            r#"{"rules": [{"contains": "call f", "response": "[f()]"},
                          {"contains": "find the lamp", "response": "Thought: look\nAction: go to desk 1"}],
                "default": "Thought: hmm\nAction: inventory"}"#,
        )
        .unwrap();
        let text = format!(
            "suites = [\"house.json\", \"tools.json\"]\n{extra}\n[backends.agent]\nkind = \"scripted\"\nscript = \"agent.json\"\n"
        );
        RunConfig::parse(&text, "cfg", dir).unwrap()
    }

    #[test]
    fn run_is_deterministic_across_worker_counts() {
        let dir = tempfile::tempdir().unwrap();
        let one = run(&setup(dir.path(), "workers = 1\noutput_dir = \"a\"")).unwrap();
        let many = run(&setup(dir.path(), "workers = 3\noutput_dir = \"b\"")).unwrap();
        assert_eq!(one.episodes, 3);
        assert_eq!(one.report, many.report);
        assert!(one.ok());
        for f in ["records.jsonl", "report.json", "report.txt"] {
            let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
            let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
            assert_eq!(a, b, "{f}");
        }
        let (recs, skipped) = read_records(&dir.path().join("a/records.jsonl")).unwrap();
        assert_eq!(skipped, 0);
        assert_eq!(recs.iter().map(|r| r.success).collect::<Vec<_>>(), vec![true, false, true]);
        assert_eq!(recs[1].exit_reason, crate::model::ExitReason::StepLimit);
    }

    #[test]
    fn ablation_grid_names() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = setup(dir.path(), "");
        cfg.backends.selector = cfg.backends.agent.clone();
        cfg.backends.editor = Some(BackendConfig::Heuristic {});
        cfg.ablation.selector = vec![false, true];
        cfg.ablation.editor = vec![false, true];
        let names: Vec<String> = ablation_grid(&cfg).iter().map(Variant::name).collect();
        assert_eq!(names, ["agent", "agent+editor", "agent+selector", "agent+selector+editor"]);
        let out = run(&cfg).unwrap();
        assert_eq!(out.report.blocks.len(), 4);
        assert_eq!(out.episodes, 12);
    }

    #[test]
    fn unreachable_agent_fails_every_episode() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = setup(dir.path(), "");
        let mut http = crate::policy::HttpConfig::new("http://127.0.0.1:9", "m");
        http.timeout_secs = 2.0;
        http.retry_backoff_ms = 1;
        cfg.backends.agent = Some(BackendConfig::Http(http));
        let out = run(&cfg).unwrap();
        assert_eq!(out.backend_errors, out.episodes);
        assert!(!out.ok());
    }

    #[test]
    fn report_skips_corrupt_lines() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = setup(dir.path(), "");
        run(&cfg).unwrap();
        let path = cfg.output_dir.join("records.jsonl");
        let mut text = std::fs::read_to_string(&path).unwrap();
        text.push_str("{\"task_id\": \"torn\n");
        std::fs::write(&path, text).unwrap();
        let report = report_file(&path, 3).unwrap();
        assert_eq!(report.skipped_lines, 1);
        assert!(report.to_text().ends_with("1 line(s) skipped\n"));
        assert_eq!(report_file(&path, 3).unwrap(), report);
    }
}
