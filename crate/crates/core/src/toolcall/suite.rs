use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::grammar::{parse_call_batches, ParseError};
use super::world::MockWorld;
use crate::model::{ToolCall, ToolSpec, UserTurn};

/// Benchmark category labels for tool-calling suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Simple,
    Java,
    Javascript,
    Multiple,
    Parallel,
    ParallelMultiple,
    LiveSimple,
    LiveMultiple,
    LiveParallel,
    LiveParallelMultiple,
    MultiTurnBase,
    MultiTurnMissFunc,
    MultiTurnMissParam,
    MultiTurnLongContext,
    LiveRelevance,
    Irrelevance,
    LiveIrrelevance,
}

impl Category {
    pub const ALL: [Category; 17] = [
        Category::Simple,
        Category::Java,
        Category::Javascript,
        Category::Multiple,
        Category::Parallel,
        Category::ParallelMultiple,
        Category::LiveSimple,
        Category::LiveMultiple,
        Category::LiveParallel,
        Category::LiveParallelMultiple,
        Category::MultiTurnBase,
        Category::MultiTurnMissFunc,
        Category::MultiTurnMissParam,
        Category::MultiTurnLongContext,
        Category::LiveRelevance,
        Category::Irrelevance,
        Category::LiveIrrelevance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Simple => "simple",
            Category::Java => "java",
            Category::Javascript => "javascript",
            Category::Multiple => "multiple",
            Category::Parallel => "parallel",
            Category::ParallelMultiple => "parallel_multiple",
            Category::LiveSimple => "live_simple",
            Category::LiveMultiple => "live_multiple",
            Category::LiveParallel => "live_parallel",
            Category::LiveParallelMultiple => "live_parallel_multiple",
            Category::MultiTurnBase => "multi_turn_base",
            Category::MultiTurnMissFunc => "multi_turn_miss_func",
            Category::MultiTurnMissParam => "multi_turn_miss_param",
            Category::MultiTurnLongContext => "multi_turn_long_context",
            Category::LiveRelevance => "live_relevance",
            Category::Irrelevance => "irrelevance",
            Category::LiveIrrelevance => "live_irrelevance",
        }
    }

    /// Categories whose answers must contain exactly the golden number of calls.
    pub fn checks_call_count(self) -> bool {
        matches!(self, Category::Parallel | Category::ParallelMultiple)
    }

    pub fn is_multi_turn(self) -> bool {
        matches!(
            self,
            Category::MultiTurnBase
                | Category::MultiTurnMissFunc
                | Category::MultiTurnMissParam
                | Category::MultiTurnLongContext
        )
    }

    pub fn default_relevance(self) -> RelevanceExpected {
        match self {
            Category::LiveRelevance => RelevanceExpected::CallRequired,
            Category::Irrelevance | Category::LiveIrrelevance => RelevanceExpected::NoCallRequired,
            _ => RelevanceExpected::NotApplicable,
        }
    }

    /// Coarse reporting group.
    pub fn group(self) -> &'static str {
        match self {
            Category::Simple
            | Category::Java
            | Category::Javascript
            | Category::Multiple
            | Category::Parallel
            | Category::ParallelMultiple => "non_live",
            Category::LiveSimple => "live_simple",
            Category::LiveMultiple => "live_multiple",
            Category::LiveParallel => "live_parallel",
            Category::LiveParallelMultiple => "live_parallel_multiple",
            Category::MultiTurnBase => "multi_turn_standard",
            Category::MultiTurnMissFunc | Category::MultiTurnMissParam | Category::MultiTurnLongContext => {
                "multi_turn_challenge"
            }
            Category::LiveRelevance => "relevance",
            Category::Irrelevance | Category::LiveIrrelevance => "irrelevance",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelevanceExpected {
    #[serde(rename = "call_required")]
    CallRequired,
    #[serde(rename = "no_call_required")]
    NoCallRequired,
    #[serde(rename = "n/a")]
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteTurn {
    pub turn: UserTurn,
    /// Tools that become visible from this turn on.
    pub reveal_tools: Vec<String>,
}

/// One tool-calling instance: tools, user turns and the starting world.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolSuite {
    pub id: String,
    pub category: Category,
    pub tools: Vec<ToolSpec>,
    pub turns: Vec<SuiteTurn>,
    pub relevance_expected: RelevanceExpected,
    pub initial_world: MockWorld,
}

impl ToolSuite {
    pub fn tool(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.iter().find(|t| t.name == name)
    }

    /// Tools the agent may see during turn `turn_index`.
    pub fn visible_tools(&self, turn_index: usize) -> Vec<ToolSpec> {
        let hidden: Vec<&str> = self
            .turns
            .iter()
            .enumerate()
            .filter(|(i, _)| *i > turn_index)
            .flat_map(|(_, t)| t.reveal_tools.iter().map(String::as_str))
            .collect();
        self.tools
            .iter()
            .filter(|t| !hidden.contains(&t.name.as_str()))
            .cloned()
            .collect()
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, t) in self.tools.iter().enumerate() {
            out.extend(t.violations());
            if self.tools[..i].iter().any(|o| o.name == t.name) {
                out.push(format!("duplicate tool name {}", t.name));
            }
        }
        if self.turns.is_empty() {
            out.push("suite has no turns".into());
        }
        for (i, turn) in self.turns.iter().enumerate() {
            for name in &turn.reveal_tools {
                if self.tool(name).is_none() {
                    out.push(format!("turn {}: revealed tool {name} is not declared", i + 1));
                }
            }
            for call in turn.turn.golden_calls.iter().flatten() {
                if self.tool(&call.function).is_none() {
                    out.push(format!("turn {}: golden call to undeclared tool {}", i + 1, call.function));
                }
            }
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid suite JSON in {path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("golden call in turn {turn} does not parse: {source}")]
    Golden { turn: usize, source: ParseError },
    #[error("suite is invalid: {0}")]
    Invalid(String),
}

/// On-disk form of a tool suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub category: Category,
    pub tools: Vec<ToolSpec>,
    pub turns: Vec<TurnFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance_expected: Option<RelevanceExpected>,
    #[serde(default)]
    pub initial_world: MockWorld,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnFile {
    pub message: String,
    /// Each entry is one or more bracketed batches in call grammar.
    #[serde(default)]
    pub golden_calls: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reveal_tools: Vec<String>,
}

impl SuiteFile {
    pub fn into_suite(self, fallback_id: &str) -> Result<ToolSuite, SuiteError> {
        let mut turns = Vec::with_capacity(self.turns.len());
        for (i, t) in self.turns.into_iter().enumerate() {
            let mut golden: Vec<Vec<ToolCall>> = Vec::new();
            for text in &t.golden_calls {
                let batches = parse_call_batches(text).map_err(|source| SuiteError::Golden { turn: i + 1, source })?;
                golden.extend(batches);
            }
            turns.push(SuiteTurn {
                turn: UserTurn {
                    message: t.message,
                    golden_calls: golden,
                },
                reveal_tools: t.reveal_tools,
            });
        }
        let suite = ToolSuite {
            id: self.id.unwrap_or_else(|| fallback_id.to_string()),
            category: self.category,
            relevance_expected: self.relevance_expected.unwrap_or(self.category.default_relevance()),
            tools: self.tools,
            turns,
            initial_world: self.initial_world,
        };
        let problems = suite.violations();
        if problems.is_empty() {
            Ok(suite)
        } else {
            Err(SuiteError::Invalid(problems.join("; ")))
        }
    }
}

pub fn parse_suite(json: &str, fallback_id: &str) -> Result<ToolSuite, SuiteError> {
    let file: SuiteFile = serde_json::from_str(json).map_err(|source| SuiteError::Json {
        path: fallback_id.to_string(),
        source,
    })?;
    file.into_suite(fallback_id)
}

pub fn load_suite(path: &Path) -> Result<ToolSuite, SuiteError> {
    let text = std::fs::read_to_string(path).map_err(|source| SuiteError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("suite");
    let file: SuiteFile = serde_json::from_str(&text).map_err(|source| SuiteError::Json {
        path: path.display().to_string(),
        source,
    })?;
    file.into_suite(id)
}
