//! Run orchestration: ablation grid, worker pool, ordered JSONL output and
//! the final report.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use thiserror::Error;

use super::config::{build_backend, ConfigError, RunConfig};
use super::suites::{load_suite_path, LoadError, SuiteSet};
use crate::metrics::MetricsReport;
use crate::model::{EpisodeRecord, ExitReason, Trajectory};
use crate::policy::BackendHandle;
use crate::react::{run_episode, ModuleWiring, ReactLimits};
use crate::rng;
use crate::toolcall::{run_tool_episode, ToolLimits, ToolWiring};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("no suites configured")]
    NoSuites,
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Which optional modules a variant switches on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Variant {
    pub selector: bool,
    pub editor: bool,
    pub memory: bool,
    pub verifier: bool,
}

impl Variant {
    pub fn name(&self) -> String {
        let mut name = String::from("agent");
        for (on, module) in [
            (self.selector, "selector"),
            (self.editor, "editor"),
            (self.memory, "memory"),
            (self.verifier, "verifier"),
        ] {
            if on {
                name.push('+');
                name.push_str(module);
            }
        }
        name
    }
}

/// Every combination of the ablation switches, selector varying slowest.
pub fn ablation_grid(cfg: &RunConfig) -> Vec<Variant> {
    let axis = |values: &[bool], configured: bool| -> Vec<bool> {
        if values.is_empty() {
            vec![configured]
        } else {
            let mut v = Vec::new();
            for &x in values {
                if !v.contains(&x) {
                    v.push(x);
                }
            }
            v
        }
    };
    let b = &cfg.backends;
    let a = &cfg.ablation;
    let mut out = Vec::new();
    for &selector in &axis(&a.selector, b.selector.is_some()) {
        for &editor in &axis(&a.editor, b.editor.is_some()) {
            for &memory in &axis(&a.memory, b.memory.is_some()) {
                for &verifier in &axis(&a.verifier, b.verifier.is_some()) {
                    out.push(Variant {
                        selector,
                        editor,
                        memory,
                        verifier,
                    });
                }
            }
        }
    }
    out
}

struct Handles {
    agent: BackendHandle,
    memory: Option<BackendHandle>,
    verifier: Option<BackendHandle>,
    selector: Option<BackendHandle>,
    editor: Option<BackendHandle>,
}

impl Handles {
    fn build(cfg: &RunConfig) -> Result<Self, ConfigError> {
        let b = &cfg.backends;
        let opt = |role: &str, c: &Option<_>| c.as_ref().map(|c| build_backend(role, c)).transpose();
        Ok(Self {
            agent: build_backend("agent", b.agent.as_ref().expect("validated"))?,
            memory: opt("memory", &b.memory)?,
            verifier: opt("verifier", &b.verifier)?,
            selector: opt("selector", &b.selector)?,
            editor: opt("editor", &b.editor)?,
        })
    }

    fn pick(on: bool, h: &Option<BackendHandle>) -> Option<BackendHandle> {
        if on {
            h.clone()
        } else {
            None
        }
    }
}

struct Job {
    variant: usize,
    suite: usize,
    task: usize,
}

fn run_job(cfg: &RunConfig, handles: &Handles, variants: &[Variant], suites: &[SuiteSet], job: &Job) -> EpisodeRecord {
    let v = variants[job.variant];
    let variant = v.name();
    let suite = &suites[job.suite];
    let params = cfg.gen_params();
    match suite {
        SuiteSet::Embodied(s) => {
            let task = &s.tasks[job.task];
            let seed = rng::derive_seed(cfg.seed, &format!("{}/{}", s.name, task.id));
            let wiring = ModuleWiring {
                agent: handles.agent.clone(),
                memory: Handles::pick(v.memory, &handles.memory),
                verifier: Handles::pick(v.verifier, &handles.verifier),
            };
            let limits = ReactLimits {
                k_mem: cfg.react.k_mem,
                retain_last: cfg.react.retain_last,
                k_earlyexit: cfg.react.k_earlyexit,
                params,
                step_limit: cfg.react.step_limit,
            };
            run_episode(task, seed, &wiring, &limits, &s.name, &variant).unwrap_or_else(|e| EpisodeRecord {
                task_id: task.id.clone(),
                suite: s.name.clone(),
                variant: variant.clone(),
                seed,
                steps: Trajectory::new(),
                turns: Vec::new(),
                success: false,
                progress: 0.0,
                generated_tokens: 0,
                wall_seconds: 0.0,
                module_config: BTreeMap::new(),
                exit_reason: ExitReason::BackendError,
                error: Some(e.to_string()),
                warnings: Vec::new(),
            })
        }
        SuiteSet::Tool { name, instances } => {
            let inst = &instances[job.task];
            let seed = rng::derive_seed(cfg.seed, &format!("{name}/{}", inst.id));
            let wiring = ToolWiring {
                agent: handles.agent.clone(),
                selector: Handles::pick(v.selector, &handles.selector),
                editor: Handles::pick(v.editor, &handles.editor),
            };
            let limits = ToolLimits {
                max_batches_per_turn: cfg.toolcall.max_batches_per_turn,
                params,
            };
            run_tool_episode(inst, &wiring, &limits, name, &variant, seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub episodes: usize,
    pub backend_errors: usize,
    pub report: MetricsReport,
}

impl RunOutcome {
    /// Any episode lost to a backend failure makes the run unsuccessful.
    pub fn ok(&self) -> bool {
        self.backend_errors == 0
    }
}

pub fn load_suites(cfg: &RunConfig) -> Result<Vec<SuiteSet>, RunError> {
    if cfg.suites.is_empty() {
        return Err(RunError::NoSuites);
    }
    let mut out = Vec::new();
    for path in &cfg.suites {
        out.extend(load_suite_path(path, cfg.seed)?);
    }
    Ok(out)
}

/// Runs every (variant, suite, task) episode. Records are written to
/// `records.jsonl` in job order as soon as each prefix is complete, so the
/// file is identical whatever the worker count.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, RunError> {
    let suites = load_suites(cfg)?;
    let handles = Handles::build(cfg)?;
    let variants = ablation_grid(cfg);
    let mut jobs = Vec::new();
    for variant in 0..variants.len() {
        for (suite, s) in suites.iter().enumerate() {
            for task in 0..s.len() {
                jobs.push(Job { variant, suite, task });
            }
        }
    }

    fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))?;
    let records_path = cfg.output_dir.join(RECORDS_FILE);
    let file = File::create(&records_path).map_err(io_err(&records_path))?;
    let mut writer = BufWriter::new(file);

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, EpisodeRecord)>();
    let mut records: Vec<EpisodeRecord> = Vec::with_capacity(jobs.len());
    let workers = cfg.workers.min(jobs.len()).max(1);
    let write_result = std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, jobs, handles, variants, suites) = (&next, &jobs, &handles, &variants, &suites);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = jobs.get(i) else { break };
                let rec = run_job(cfg, handles, variants, suites, job);
                if tx.send((i, rec)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut pending: BTreeMap<usize, EpisodeRecord> = BTreeMap::new();
        for (i, rec) in rx {
            pending.insert(i, rec);
            while let Some(rec) = pending.remove(&records.len()) {
                let line = serde_json::to_string(&rec).expect("record serializes");
                writeln!(writer, "{line}").and_then(|_| writer.flush())?;
                log::info!("{} {} {}: {:?}", rec.variant, rec.suite, rec.task_id, rec.exit_reason);
                records.push(rec);
            }
        }
        Ok::<(), std::io::Error>(())
    });
    write_result.map_err(io_err(&records_path))?;

    let report = MetricsReport::build(&records, cfg.retry_threshold, 0);
    write_report(&report, &cfg.output_dir)?;
    Ok(RunOutcome {
        output_dir: cfg.output_dir.clone(),
        episodes: records.len(),
        backend_errors: records
            .iter()
            .filter(|r| r.exit_reason == ExitReason::BackendError)
            .count(),
        report,
    })
}

pub fn write_report(report: &MetricsReport, dir: &Path) -> Result<(), RunError> {
    let json = dir.join(REPORT_JSON);
    fs::write(&json, report.to_json()).map_err(io_err(&json))?;
    let text = dir.join(REPORT_TEXT);
    fs::write(&text, report.to_text()).map_err(io_err(&text))?;
    Ok(())
}

/// Parses a JSONL file, skipping blank lines and counting lines that do
/// not hold a valid record (a torn final line included).
pub fn read_records(path: &Path) -> Result<(Vec<EpisodeRecord>, usize), RunError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    let mut skipped = 0;
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<EpisodeRecord>(line) {
            Ok(r) => records.push(r),
            Err(e) => {
                log::warn!("skipping malformed record: {e}");
                skipped += 1;
            }
        }
    }
    Ok((records, skipped))
}

pub fn report_file(path: &Path, retry_threshold: usize) -> Result<MetricsReport, RunError> {
    let (records, skipped) = read_records(path)?;
    Ok(MetricsReport::build(&records, retry_threshold, skipped))
}
