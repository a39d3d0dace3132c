//! Run configuration, read from TOML.
//!
//! ```toml
//! seed = 42                  # base seed for sampling and environments
//! workers = 4                # episode worker threads, >= 1
//! output_dir = "out"         # records.jsonl, report.json, report.txt
//! retry_threshold = 3        # minimum run length counted as a retry loop
//! suites = ["house.json"]    # embodied suites, tool suites or manifests
//!
//! [generation]               # sampling parameters for every backend
//! max_tokens = 512
//! temperature = 0.0
//!
//! [react]
//! k_mem = 5                  # memory refresh interval in steps
//! retain_last = 2            # raw steps shown next to the memory
//! k_earlyexit = 5            # verifier interval in steps
//! # step_limit = 30          # overrides every task's own limit
//!
//! [toolcall]
//! max_batches_per_turn = 8   # agent outputs per multi-turn user turn
//!
//! [gate]                     # defaults for denoise-demo
//! mode = "threshold"         # or "factor"
//! tau = 0.9
//! gamma = 0.5
//!
//! [backends.agent]           # required; memory, verifier, selector and
//! kind = "scripted"          # editor are optional and enable the module
//! script = "agent.json"      # rule table; or `response = "..."`
//!
//! [backends.editor]
//! kind = "heuristic"         # rule-based repair, no model
//!
//! # [backends.memory]
//! # kind = "http"
//! # base_url = "http://localhost:8000"
//! # model = "my-model"
//! # api_key_env = "OPENAI_API_KEY"
//!
//! [ablation]                 # on/off grid; omitted modules stay on when
//! selector = [false, true]   # configured and off otherwise
//! ```
//!
//! Relative paths are resolved against the config file's directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::denoise::{GateConfig, GateMode, DEFAULT_GAMMA, DEFAULT_TAU};
use crate::metrics::DEFAULT_RETRY_THRESHOLD;
use crate::policy::{BackendHandle, GenParams, HttpConfig, HttpPolicy, PolicyScript, ScriptedPolicy};
use crate::react::{DEFAULT_K_EARLYEXIT, DEFAULT_K_MEM, DEFAULT_RETAIN_LAST};
use crate::toolcall::runner::DEFAULT_MAX_BATCHES;
use crate::toolcall::HeuristicEditor;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedBackend {
    /// Rule table file (JSON).
    #[serde(default)]
    pub script: Option<PathBuf>,
    /// Constant reply, used when no script is given.
    #[serde(default)]
    pub response: Option<String>,
    #[serde(default)]
    pub simulated_tokens_per_second: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    Scripted(ScriptedBackend),
    Http(HttpConfig),
    /// Rule-based tool-call repair; valid for the editor only.
    Heuristic {},
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Backends {
    pub agent: Option<BackendConfig>,
    pub memory: Option<BackendConfig>,
    pub verifier: Option<BackendConfig>,
    pub selector: Option<BackendConfig>,
    pub editor: Option<BackendConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReactSection {
    pub k_mem: u32,
    pub retain_last: usize,
    pub k_earlyexit: u32,
    pub step_limit: Option<u32>,
}

impl Default for ReactSection {
    fn default() -> Self {
        Self {
            k_mem: DEFAULT_K_MEM,
            retain_last: DEFAULT_RETAIN_LAST,
            k_earlyexit: DEFAULT_K_EARLYEXIT,
            step_limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToolSection {
    pub max_batches_per_turn: usize,
}

impl Default for ToolSection {
    fn default() -> Self {
        Self {
            max_batches_per_turn: DEFAULT_MAX_BATCHES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationSection {
    pub max_tokens: u32,
    pub temperature: f64,
    pub stop: Vec<String>,
}

impl Default for GenerationSection {
    fn default() -> Self {
        let p = GenParams::default();
        Self {
            max_tokens: p.max_tokens,
            temperature: p.temperature,
            stop: p.stop,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateSection {
    pub mode: GateMode,
    pub tau: f64,
    pub gamma: f64,
}

impl Default for GateSection {
    fn default() -> Self {
        Self {
            mode: GateMode::Threshold,
            tau: DEFAULT_TAU,
            gamma: DEFAULT_GAMMA,
        }
    }
}

/// On/off settings per module. An empty list means "as configured".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationSection {
    pub selector: Vec<bool>,
    pub editor: Vec<bool>,
    pub memory: Vec<bool>,
    pub verifier: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_retry_threshold")]
    pub retry_threshold: usize,
    #[serde(default)]
    pub suites: Vec<PathBuf>,
    #[serde(default)]
    pub generation: GenerationSection,
    #[serde(default)]
    pub react: ReactSection,
    #[serde(default)]
    pub toolcall: ToolSection,
    #[serde(default)]
    pub gate: GateSection,
    #[serde(default)]
    pub backends: Backends,
    #[serde(default)]
    pub ablation: AblationSection,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_workers() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_retry_threshold() -> usize {
    DEFAULT_RETRY_THRESHOLD
}

impl RunConfig {
    /// Parses and validates; relative paths are joined onto `base_dir`.
    pub fn parse(text: &str, origin: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.output_dir);
        self.suites.iter_mut().for_each(join);
        for b in [
            &mut self.backends.agent,
            &mut self.backends.memory,
            &mut self.backends.verifier,
            &mut self.backends.selector,
            &mut self.backends.editor,
        ]
        .into_iter()
        .flatten()
        {
            if let BackendConfig::Scripted(ScriptedBackend { script: Some(p), .. }) = b {
                join(p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.workers < 1 {
            return Err(invalid("workers", "must be >= 1"));
        }
        if self.retry_threshold < 2 {
            return Err(invalid("retry_threshold", "must be >= 2"));
        }
        if self.react.k_mem < 1 {
            return Err(invalid("react.k_mem", "must be >= 1"));
        }
        if self.react.k_earlyexit < 1 {
            return Err(invalid("react.k_earlyexit", "must be >= 1"));
        }
        if self.react.step_limit == Some(0) {
            return Err(invalid("react.step_limit", "must be >= 1"));
        }
        if self.toolcall.max_batches_per_turn < 1 {
            return Err(invalid("toolcall.max_batches_per_turn", "must be >= 1"));
        }
        GateConfig::new(self.gate.mode, self.gate.tau, self.gate.gamma)
            .map_err(|e| invalid("gate", e.to_string()))?;
        if self.backends.agent.is_none() {
            return Err(invalid("backends.agent", "an agent backend is required"));
        }
        for (role, b) in self.roles() {
            match b {
                BackendConfig::Heuristic {} if role != "editor" => {
                    return Err(invalid(
                        &format!("backends.{role}.kind"),
                        "heuristic is only available for the editor",
                    ))
                }
                BackendConfig::Scripted(s) if s.script.is_some() == s.response.is_some() => {
                    return Err(invalid(
                        &format!("backends.{role}"),
                        "scripted backends need exactly one of `script` or `response`",
                    ))
                }
                _ => {}
            }
        }
        for (key, values, configured) in [
            ("ablation.selector", &self.ablation.selector, self.backends.selector.is_some()),
            ("ablation.editor", &self.ablation.editor, self.backends.editor.is_some()),
            ("ablation.memory", &self.ablation.memory, self.backends.memory.is_some()),
            ("ablation.verifier", &self.ablation.verifier, self.backends.verifier.is_some()),
        ] {
            if values.contains(&true) && !configured {
                return Err(invalid(key, "module switched on but no backend is configured"));
            }
        }
        Ok(())
    }

    fn roles(&self) -> Vec<(&'static str, &BackendConfig)> {
        let b = &self.backends;
        [
            ("agent", &b.agent),
            ("memory", &b.memory),
            ("verifier", &b.verifier),
            ("selector", &b.selector),
            ("editor", &b.editor),
        ]
        .into_iter()
        .filter_map(|(r, c)| c.as_ref().map(|c| (r, c)))
        .collect()
    }

    pub fn gen_params(&self) -> GenParams {
        GenParams {
            max_tokens: self.generation.max_tokens,
            temperature: self.generation.temperature,
            stop: self.generation.stop.clone(),
            seed: None,
        }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    RunConfig::parse(&text, &path.display().to_string(), base)
}

/// Instantiates a backend; `role` names it in labels and errors.
pub fn build_backend(role: &str, cfg: &BackendConfig) -> Result<BackendHandle, ConfigError> {
    Ok(match cfg {
        BackendConfig::Scripted(s) => {
            let mut script = match (&s.script, &s.response) {
                (Some(path), _) => {
                    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                        path: path.display().to_string(),
                        source,
                    })?;
                    serde_json::from_str::<PolicyScript>(&text).map_err(|e| ConfigError::Parse {
                        path: path.display().to_string(),
                        message: e.to_string(),
                    })?
                }
                (None, Some(text)) => PolicyScript::new(text.clone()),
                (None, None) => return Err(invalid(&format!("backends.{role}"), "no script or response")),
            };
            if s.simulated_tokens_per_second.is_some() {
                script.simulated_tokens_per_second = s.simulated_tokens_per_second;
            }
            let policy = ScriptedPolicy::new(role, script)
                .map_err(|e| invalid(&format!("backends.{role}.script"), e.to_string()))?;
            Arc::new(policy)
        }
        BackendConfig::Http(h) => Arc::new(HttpPolicy::new(h.clone())),
        BackendConfig::Heuristic {} => Arc::new(HeuristicEditor),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::parse(text, "test.toml", Path::new("/base"))
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse("[backends.agent]\nkind = \"scripted\"\nresponse = \"hi\"\n").unwrap();
        assert_eq!(cfg.react.k_mem, 5);
        assert_eq!(cfg.react.k_earlyexit, 5);
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.workers, 1);
        assert_eq!(cfg.retry_threshold, 3);
        assert_eq!(cfg.toolcall.max_batches_per_turn, 8);
        assert_eq!(cfg.gate.tau, 0.9);
        assert_eq!(cfg.output_dir, PathBuf::from("/base/out"));
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse("foo = 1\n[backends.agent]\nkind = \"scripted\"\nresponse = \"x\"\n").unwrap_err();
        assert!(err.to_string().contains("foo"), "{err}");
        let err = parse("[backends.agent]\nkind = \"scripted\"\nresponse = \"x\"\nbar = 2\n").unwrap_err();
        assert!(err.to_string().contains("bar"), "{err}");
    }

    #[test]
    fn bounds_are_checked() {
        let err = parse("workers = 0\n[backends.agent]\nkind = \"scripted\"\nresponse = \"x\"\n").unwrap_err();
        assert!(err.to_string().contains("workers"), "{err}");
        assert!(parse("seed = 1\n").unwrap_err().to_string().contains("backends.agent"));
        let err = parse("[backends.agent]\nkind = \"heuristic\"\n").unwrap_err();
        assert!(err.to_string().contains("editor"), "{err}");
        let err = parse("[ablation]\nmemory = [true]\n[backends.agent]\nkind = \"scripted\"\nresponse = \"x\"\n")
            .unwrap_err();
        assert!(err.to_string().contains("ablation.memory"), "{err}");
    }

    #[test]
    fn http_backend_parses() {
        let cfg = parse(
            "[backends.agent]\nkind = \"http\"\nbase_url = \"http://localhost:1\"\nmodel = \"m\"\n\
             [backends.editor]\nkind = \"heuristic\"\n",
        )
        .unwrap();
        assert!(matches!(cfg.backends.agent, Some(BackendConfig::Http(ref h)) if h.model == "m"));
        assert!(parse("[backends.agent]\nkind = \"http\"\nbase_url = \"u\"\nmodel = \"m\"\nextra = 1\n").is_err());
    }
}
