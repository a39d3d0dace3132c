//! Embodied environments behind a common reset/step interface, with
//! subgoal bookkeeping for progress.

pub mod grid;
pub mod house;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{TaskKind, TaskSpec};
pub use grid::{GridConfig, GridNav};
pub use house::{HouseConfig, TextHouse};

pub const GRIDNAV: &str = "gridnav";
pub const TEXTHOUSE: &str = "texthouse";

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown environment '{0}'")]
    UnknownEnvironment(String),
    #[error("task has no subgoals")]
    NoSubgoals,
    #[error("invalid environment: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid suite JSON in {path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

/// Condition over environment state. Each environment answers the
/// predicates that make sense for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Predicate {
    /// Object has been in view (grid: currently visible).
    Seen(String),
    /// Object occupies the cell directly ahead (grid).
    NextTo(String),
    Holding(String),
    /// Agent is at a named location (house).
    At(String),
    /// Agent occupies a cell (grid).
    AtCell((i32, i32)),
    Opened(String),
    Used(String),
    In { object: String, location: String },
    AllOf(Vec<Predicate>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subgoal {
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub predicate: Predicate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum WorldConfig {
    Gridnav(GridConfig),
    Texthouse(HouseConfig),
}

impl WorldConfig {
    pub fn env_name(&self) -> &'static str {
        match self {
            WorldConfig::Gridnav(_) => GRIDNAV,
            WorldConfig::Texthouse(_) => TEXTHOUSE,
        }
    }
}

/// An embodied task as stored in a suite file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbodiedTask {
    pub id: String,
    pub instruction: String,
    pub goal: String,
    #[serde(default)]
    pub exemplar: String,
    pub env_name: String,
    pub step_limit: u32,
    pub world: WorldConfig,
    pub subgoals: Vec<Subgoal>,
}

impl EmbodiedTask {
    pub fn spec(&self) -> TaskSpec {
        TaskSpec {
            id: self.id.clone(),
            kind: TaskKind::Embodied,
            instruction: self.instruction.clone(),
            goal: self.goal.clone(),
            exemplar: self.exemplar.clone(),
            env_name: self.env_name.clone(),
            step_limit: self.step_limit,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = self.spec().violations();
        if self.subgoals.is_empty() {
            out.push(format!("task {}: no subgoals", self.id));
        }
        if self.env_name != GRIDNAV && self.env_name != TEXTHOUSE {
            out.push(format!("task {}: unknown environment '{}'", self.id, self.env_name));
        } else if self.env_name != self.world.env_name() {
            out.push(format!(
                "task {}: env_name '{}' does not match world type '{}'",
                self.id,
                self.env_name,
                self.world.env_name()
            ));
        }
        let mut ids = BTreeSet::new();
        for g in &self.subgoals {
            if !ids.insert(&g.id) {
                out.push(format!("task {}: duplicate subgoal id {}", self.id, g.id));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbodiedSuite {
    /// Always "embodied"; distinguishes these files from tool suites.
    pub kind: String,
    #[serde(default)]
    pub name: String,
    pub tasks: Vec<EmbodiedTask>,
}

pub fn parse_embodied_suite(json: &str, path: &str) -> Result<EmbodiedSuite, EnvError> {
    let suite: EmbodiedSuite = serde_json::from_str(json).map_err(|source| EnvError::Json {
        path: path.to_string(),
        source,
    })?;
    if suite.kind != "embodied" {
        return Err(EnvError::Invalid(format!("{path}: kind must be \"embodied\"")));
    }
    let problems: Vec<String> = suite.tasks.iter().flat_map(EmbodiedTask::violations).collect();
    if !problems.is_empty() {
        return Err(EnvError::Invalid(problems.join("; ")));
    }
    Ok(suite)
}

pub fn load_embodied_suite(path: &Path) -> Result<EmbodiedSuite, EnvError> {
    let text = std::fs::read_to_string(path).map_err(|source| EnvError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_embodied_suite(&text, &path.display().to_string())
}

/// Fraction of `subgoals` whose ids are in `satisfied`.
pub fn progress(satisfied: &BTreeSet<String>, subgoals: &[Subgoal]) -> Result<f64, EnvError> {
    if subgoals.is_empty() {
        return Err(EnvError::NoSubgoals);
    }
    let hit = subgoals.iter().filter(|g| satisfied.contains(&g.id)).count();
    Ok(hit as f64 / subgoals.len() as f64)
}

/// Lowercases, trims, drops a trailing period and collapses whitespace.
pub fn normalize_action(action: &str) -> String {
    let lowered = action.trim().to_lowercase();
    let lowered = lowered.strip_suffix('.').unwrap_or(&lowered);
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvObservation {
    pub text: String,
    pub done: bool,
    pub satisfied_subgoals: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum World {
    Grid(GridNav),
    House(TextHouse),
}

impl World {
    fn initial_text(&self) -> String {
        match self {
            World::Grid(g) => g.render(),
            World::House(h) => h.initial_observation(),
        }
    }

    fn valid_actions(&self) -> Vec<String> {
        match self {
            World::Grid(g) => g.valid_actions(),
            World::House(h) => h.valid_actions(),
        }
    }

    fn resolve(&self, normalized: &str) -> Option<String> {
        match self {
            World::Grid(g) => g.valid_actions().into_iter().find(|a| normalize_action(a) == normalized),
            World::House(h) => h.resolve(normalized),
        }
    }

    fn apply(&mut self, action: &str) -> String {
        match self {
            World::Grid(g) => g.apply(action),
            World::House(h) => h.apply(action),
        }
    }

    fn invalid_text(&self) -> &'static str {
        match self {
            World::Grid(_) => grid::UNKNOWN_ACTION,
            World::House(_) => house::NO_MATCH,
        }
    }

    fn completion_suffix(&self) -> &'static str {
        match self {
            World::Grid(_) => " The task is completed.",
            World::House(_) => "",
        }
    }

    fn holds(&self, p: &Predicate) -> bool {
        if let Predicate::AllOf(parts) = p {
            return parts.iter().all(|q| self.holds(q));
        }
        let answer = match self {
            World::Grid(g) => g.holds(p),
            World::House(h) => h.holds(p),
        };
        answer.unwrap_or(false)
    }
}

/// A running episode: world state plus cumulative subgoal satisfaction.
#[derive(Debug, Clone)]
pub struct EnvSession {
    pub world: World,
    subgoals: Vec<Subgoal>,
    satisfied: BTreeSet<String>,
    done: bool,
}

pub const ALREADY_DONE: &str = "The task is already completed.";

impl EnvSession {
    /// Builds the initial state for `(task, seed)`.
    pub fn reset(task: &EmbodiedTask, seed: u64) -> Result<(EnvSession, EnvObservation), EnvError> {
        if task.subgoals.is_empty() {
            return Err(EnvError::NoSubgoals);
        }
        let world = match (task.env_name.as_str(), &task.world) {
            (GRIDNAV, WorldConfig::Gridnav(cfg)) => World::Grid(GridNav::new(cfg, seed)?),
            (TEXTHOUSE, WorldConfig::Texthouse(cfg)) => World::House(TextHouse::new(cfg)?),
            (GRIDNAV | TEXTHOUSE, w) => {
                return Err(EnvError::Invalid(format!(
                    "env_name '{}' does not match world type '{}'",
                    task.env_name,
                    w.env_name()
                )))
            }
            (other, _) => return Err(EnvError::UnknownEnvironment(other.to_string())),
        };
        let mut session = EnvSession {
            world,
            subgoals: task.subgoals.clone(),
            satisfied: BTreeSet::new(),
            done: false,
        };
        let text = session.world.initial_text();
        let obs = session.observe(text);
        Ok((session, obs))
    }

    fn observe(&mut self, mut text: String) -> EnvObservation {
        for g in &self.subgoals {
            if !self.satisfied.contains(&g.id) && self.world.holds(&g.predicate) {
                self.satisfied.insert(g.id.clone());
            }
        }
        if !self.done && self.satisfied.len() == self.subgoals.len() {
            self.done = true;
            text.push_str(self.world.completion_suffix());
        }
        EnvObservation {
            text,
            done: self.done,
            satisfied_subgoals: self.satisfied.clone(),
        }
    }

    pub fn valid_actions(&self) -> Vec<String> {
        if self.done {
            Vec::new()
        } else {
            self.world.valid_actions()
        }
    }

    /// Applies `action`. Anything outside `valid_actions` is answered in-band
    /// and leaves the state untouched.
    pub fn step(&mut self, action: &str) -> EnvObservation {
        if self.done {
            return EnvObservation {
                text: ALREADY_DONE.to_string(),
                done: true,
                satisfied_subgoals: self.satisfied.clone(),
            };
        }
        let text = match self.world.resolve(&normalize_action(action)) {
            Some(canonical) => self.world.apply(&canonical),
            None => self.world.invalid_text().to_string(),
        };
        self.observe(text)
    }

    pub fn progress(&self) -> f64 {
        progress(&self.satisfied, &self.subgoals).expect("sessions always have subgoals")
    }

    pub fn is_done(&self) -> bool {
        self.done
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn goal(id: &str, p: Predicate) -> Subgoal {
        Subgoal {
            id: id.into(),
            description: String::new(),
            predicate: p,
        }
    }

    fn lamp_task() -> EmbodiedTask {
        serde_json::from_value(serde_json::json!({
            "id": "lamp",
            "instruction": "Interact with a household.",
            "goal": "look at bowl under the desklamp",
            "env_name": "texthouse",
            "step_limit": 10,
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

    #[test]
    fn progress_counts() {
        let goals = vec![
            goal("a", Predicate::Seen("x".into())),
            goal("b", Predicate::Seen("y".into())),
            goal("c", Predicate::Seen("z".into())),
        ];
        let sat = |ids: &[&str]| ids.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        assert_eq!(progress(&sat(&[]), &goals).unwrap(), 0.0);
        assert_eq!(progress(&sat(&["a", "b", "c"]), &goals).unwrap(), 1.0);
        assert_eq!(progress(&sat(&["a", "c"]), &goals).unwrap(), 2.0 / 3.0);
        assert!(matches!(progress(&sat(&[]), &[]), Err(EnvError::NoSubgoals)));
    }

    #[test]
    fn episode_reaches_goal_and_stops() {
        let (mut s, obs) = EnvSession::reset(&lamp_task(), 1).unwrap();
        assert!(obs.text.starts_with("You are in the middle of a room. Looking quickly around you, "));
        assert_eq!(s.step("Go to desk 1.").satisfied_subgoals.len(), 1);
        s.step("go to desk 2");
        s.step("take bowl from desk 2");
        assert_eq!(s.progress(), 2.0 / 3.0);
        // unused lamp: the all_of goal needs it to be turned on while holding the bowl
        s.step("go to desk 1");
        let obs = s.step("use desklamp");
        assert!(obs.done);
        assert_eq!(s.progress(), 1.0);
        assert!(s.valid_actions().is_empty());
        assert_eq!(s.step("go to desk 2").text, ALREADY_DONE);
    }

    #[test]
    fn invalid_action_is_in_band() {
        let (mut s, _) = EnvSession::reset(&lamp_task(), 1).unwrap();
        let before = s.world.clone();
        assert_eq!(s.step("fly to the moon").text, house::NO_MATCH);
        assert_eq!(s.step("use desklamp").text, house::NO_MATCH);
        assert_eq!(s.world, before);
    }

    #[test]
    fn unknown_environment() {
        let mut t = lamp_task();
        t.env_name = "scienceworld".into();
        assert!(matches!(EnvSession::reset(&t, 0), Err(EnvError::UnknownEnvironment(_))));
        assert!(!t.violations().is_empty());
    }

    #[test]
    fn suite_kind_is_checked() {
        let task = serde_json::to_string(&lamp_task()).unwrap();
        let ok = format!(r#"{{"kind": "embodied", "name": "h", "tasks": [{task}]}}"#);
        assert_eq!(parse_embodied_suite(&ok, "x").unwrap().tasks.len(), 1);
        let bad = ok.replace("\"embodied\"", "\"tools\"");
        assert!(parse_embodied_suite(&bad, "x").is_err());
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_action("  Go   to Desk 1. "), "go to desk 1");
    }
}
