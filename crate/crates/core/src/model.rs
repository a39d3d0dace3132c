//! Domain types shared by every part of the harness.
//!
//! Everything here is immutable once built and cheap to share between
//! episode workers. Serialization goes through serde; `Value` has a
//! hand-written mapping so that integers and floats stay distinct.

use std::collections::BTreeMap;
use std::fmt;

use indexmap::IndexMap;
use serde::de::{self, MapAccess, SeqAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Embodied,
    Toolcall,
}

/// Task-level context handed to the policy: instruction, goal, exemplar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub kind: TaskKind,
    pub instruction: String,
    pub goal: String,
    #[serde(default)]
    pub exemplar: String,
    #[serde(default)]
    pub env_name: String,
    pub step_limit: u32,
}

impl TaskSpec {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.step_limit < 1 {
            out.push(format!("task {}: step_limit must be >= 1", self.id));
        }
        if self.kind == TaskKind::Embodied && self.env_name.trim().is_empty() {
            out.push(format!("task {}: embodied task requires env_name", self.id));
        }
        out
    }
}

/// One thought/action/observation triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub index: u32,
    pub thought: String,
    pub action: String,
    pub observation: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Appends a step numbered after the current last one.
    pub fn push(&mut self, thought: impl Into<String>, action: impl Into<String>, observation: impl Into<String>) {
        let index = self.steps.len() as u32 + 1;
        self.steps.push(Step {
            index,
            thought: thought.into(),
            action: action.into(),
            observation: observation.into(),
        });
    }

    pub fn actions(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.action.as_str()).collect()
    }

    pub fn last_n(&self, n: usize) -> &[Step] {
        let start = self.steps.len().saturating_sub(n);
        &self.steps[start..]
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (pos, step) in self.steps.iter().enumerate() {
            if step.index != pos as u32 + 1 {
                out.push(format!(
                    "non-contiguous steps: position {} has index {}",
                    pos + 1,
                    step.index
                ));
                break;
            }
        }
        if self.steps.iter().any(|s| s.action.trim().is_empty()) {
            out.push("step with empty action".to_string());
        }
        out
    }
}

/// Argument value of a tool call.
///
/// Equality is structural. Lists compare in order; maps compare as sets of
/// key/value pairs (insertion order is kept only for rendering).
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Str(String),
    Int(i64),
    Float(f64),
    Bool(bool),
    Null,
    List(Vec<Value>),
    Map(IndexMap<String, Value>),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Str(_) => "string",
            Value::Int(_) => "integer",
            Value::Float(_) => "float",
            Value::Bool(_) => "boolean",
            Value::Null => "null",
            Value::List(_) => "list",
            Value::Map(_) => "map",
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Value]> {
        match self {
            Value::List(l) => Some(l),
            _ => None,
        }
    }

    /// True when every float inside the value is finite.
    pub fn is_finite(&self) -> bool {
        match self {
            Value::Float(f) => f.is_finite(),
            Value::List(items) => items.iter().all(Value::is_finite),
            Value::Map(m) => m.values().all(Value::is_finite),
            _ => true,
        }
    }

    /// Converts from a JSON value. Non-finite floats cannot occur in JSON.
    pub fn from_json(v: &serde_json::Value) -> Value {
        match v {
            serde_json::Value::Null => Value::Null,
            serde_json::Value::Bool(b) => Value::Bool(*b),
            serde_json::Value::Number(n) => match n.as_i64() {
                Some(i) if !n.is_f64() => Value::Int(i),
                _ => Value::Float(n.as_f64().unwrap_or(0.0)),
            },
            serde_json::Value::String(s) => Value::Str(s.clone()),
            serde_json::Value::Array(items) => Value::List(items.iter().map(Value::from_json).collect()),
            serde_json::Value::Object(m) => {
                Value::Map(m.iter().map(|(k, v)| (k.clone(), Value::from_json(v))).collect())
            }
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Str(s)
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<f64> for Value {
    fn from(f: f64) -> Self {
        Value::Float(f)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::{SerializeMap, SerializeSeq};
        match self {
            Value::Str(s) => serializer.serialize_str(s),
            Value::Int(i) => serializer.serialize_i64(*i),
            Value::Float(f) => serializer.serialize_f64(*f),
            Value::Bool(b) => serializer.serialize_bool(*b),
            Value::Null => serializer.serialize_unit(),
            Value::List(items) => {
                let mut seq = serializer.serialize_seq(Some(items.len()))?;
                for item in items {
                    seq.serialize_element(item)?;
                }
                seq.end()
            }
            Value::Map(m) => {
                let mut map = serializer.serialize_map(Some(m.len()))?;
                for (k, v) in m {
                    map.serialize_entry(k, v)?;
                }
                map.end()
            }
        }
    }
}

struct ValueVisitor;

impl<'de> Visitor<'de> for ValueVisitor {
    type Value = Value;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a tool-call argument value")
    }

    fn visit_bool<E: de::Error>(self, v: bool) -> Result<Value, E> {
        Ok(Value::Bool(v))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Value, E> {
        Ok(Value::Int(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Value, E> {
        i64::try_from(v)
            .map(Value::Int)
            .map_err(|_| E::custom("integer out of range"))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Value, E> {
        if v.is_finite() {
            Ok(Value::Float(v))
        } else {
            Err(E::custom("non-finite float"))
        }
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Value, E> {
        Ok(Value::Str(v.to_string()))
    }

    fn visit_string<E: de::Error>(self, v: String) -> Result<Value, E> {
        Ok(Value::Str(v))
    }

    fn visit_unit<E: de::Error>(self) -> Result<Value, E> {
        Ok(Value::Null)
    }

    fn visit_none<E: de::Error>(self) -> Result<Value, E> {
        Ok(Value::Null)
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Value, A::Error> {
        let mut items = Vec::new();
        while let Some(item) = seq.next_element()? {
            items.push(item);
        }
        Ok(Value::List(items))
    }

    fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Value, A::Error> {
        let mut m = IndexMap::new();
        while let Some((k, v)) = access.next_entry::<String, Value>()? {
            m.insert(k, v);
        }
        Ok(Value::Map(m))
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Value, D::Error> {
        deserializer.deserialize_any(ValueVisitor)
    }
}

/// Schema of a single parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    #[serde(rename = "type")]
    pub ty: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, rename = "enum", skip_serializing_if = "Option::is_none")]
    pub enum_values: Option<Vec<Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub items: Option<Box<ParamSpec>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSchema {
    #[serde(rename = "type", default = "object_type")]
    pub ty: String,
    #[serde(default)]
    pub properties: IndexMap<String, ParamSpec>,
    #[serde(default)]
    pub required: Vec<String>,
}

fn object_type() -> String {
    "dict".to_string()
}

/// A callable tool description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub parameters: ParamSchema,
}

impl ToolSpec {
    pub fn violations(&self) -> Vec<String> {
        self.parameters
            .required
            .iter()
            .filter(|r| !self.parameters.properties.contains_key(*r))
            .map(|r| format!("tool {}: required parameter {r} not declared in properties", self.name))
            .collect()
    }
}

/// A parsed invocation: dotted function name plus named arguments.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolCall {
    pub function: String,
    pub arguments: IndexMap<String, Value>,
}

impl ToolCall {
    pub fn new(function: impl Into<String>) -> Self {
        Self {
            function: function.into(),
            arguments: IndexMap::new(),
        }
    }

    pub fn arg(mut self, name: impl Into<String>, value: impl Into<Value>) -> Self {
        self.arguments.insert(name.into(), value.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionResult {
    pub call: ToolCall,
    pub outcome: Outcome,
    pub payload: String,
}

impl ExecutionResult {
    pub fn ok(call: ToolCall, payload: impl Into<String>) -> Self {
        Self {
            call,
            outcome: Outcome::Ok,
            payload: payload.into(),
        }
    }

    pub fn error(call: ToolCall, payload: impl Into<String>) -> Self {
        let mut payload = payload.into();
        if payload.is_empty() {
            payload = "error".to_string();
        }
        Self {
            call,
            outcome: Outcome::Error,
            payload,
        }
    }
}

/// A user message plus the calls that would satisfy it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UserTurn {
    pub message: String,
    /// Golden call batches, in the order a correct agent would issue them.
    pub golden_calls: Vec<Vec<ToolCall>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitReason {
    Goal,
    /// Every user turn was played out but not all of them were solved.
    Completed,
    StepLimit,
    EarlyExit,
    BackendError,
}

/// One agent output inside a tool-calling turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub raw: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited: Option<String>,
    /// Canonical rendering of the calls that were parsed, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calls: Option<String>,
    #[serde(default)]
    pub verdicts: Vec<String>,
    #[serde(default)]
    pub results: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_tools: Option<Vec<String>>,
    pub batches: Vec<BatchRecord>,
    pub success: bool,
}

/// Persisted log of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub task_id: String,
    #[serde(default)]
    pub suite: String,
    #[serde(default)]
    pub variant: String,
    pub seed: u64,
    pub steps: Trajectory,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub turns: Vec<TurnRecord>,
    pub success: bool,
    pub progress: f64,
    pub generated_tokens: u64,
    pub wall_seconds: f64,
    #[serde(default)]
    pub module_config: BTreeMap<String, String>,
    pub exit_reason: ExitReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Non-fatal module problems (fallbacks, empty summaries).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Lists every invariant the record breaks; empty means well-formed.
pub fn validate_record(record: &EpisodeRecord) -> Vec<String> {
    let mut out = Vec::new();
    if !(0.0..=1.0).contains(&record.progress) || record.progress.is_nan() {
        out.push(format!("progress {} outside [0,1]", record.progress));
    }
    if record.success && record.progress != 1.0 {
        out.push("success requires progress=1.0".to_string());
    }
    if !(record.wall_seconds >= 0.0) {
        out.push(format!("wall_seconds {} is negative", record.wall_seconds));
    }
    out.extend(record.steps.violations());
    out
}
