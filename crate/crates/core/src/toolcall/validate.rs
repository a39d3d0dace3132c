//! AST-style checking of parsed calls against declared tool schemas.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{ParamSpec, ToolCall, ToolSpec, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VerdictCategory {
    Ok,
    ParseError,
    WrongFunction,
    MissingParameter,
    UnexpectedParameter,
    ValueError,
    CallCountError,
}

impl VerdictCategory {
    pub const ALL: [VerdictCategory; 7] = [
        VerdictCategory::Ok,
        VerdictCategory::ParseError,
        VerdictCategory::WrongFunction,
        VerdictCategory::MissingParameter,
        VerdictCategory::UnexpectedParameter,
        VerdictCategory::ValueError,
        VerdictCategory::CallCountError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VerdictCategory::Ok => "OK",
            VerdictCategory::ParseError => "PARSE_ERROR",
            VerdictCategory::WrongFunction => "WRONG_FUNCTION",
            VerdictCategory::MissingParameter => "MISSING_PARAMETER",
            VerdictCategory::UnexpectedParameter => "UNEXPECTED_PARAMETER",
            VerdictCategory::ValueError => "VALUE_ERROR",
            VerdictCategory::CallCountError => "CALL_COUNT_ERROR",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.as_str() == s)
    }

    /// Coarse failure family: "schema", "parameter_value" or "call_count".
    pub fn coarse(self) -> Option<&'static str> {
        match self {
            VerdictCategory::Ok => None,
            VerdictCategory::ParseError | VerdictCategory::WrongFunction => Some("schema"),
            VerdictCategory::MissingParameter | VerdictCategory::UnexpectedParameter | VerdictCategory::ValueError => {
                Some("parameter_value")
            }
            VerdictCategory::CallCountError => Some("call_count"),
        }
    }
}

impl fmt::Display for VerdictCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationVerdict {
    pub category: VerdictCategory,
    pub detail: String,
}

impl ValidationVerdict {
    pub fn ok() -> Self {
        Self {
            category: VerdictCategory::Ok,
            detail: String::new(),
        }
    }

    pub fn new(category: VerdictCategory, detail: impl Into<String>) -> Self {
        Self {
            category,
            detail: detail.into(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.category == VerdictCategory::Ok
    }

    /// `CATEGORY: detail`, the form stored in episode logs.
    pub fn to_log(&self) -> String {
        if self.detail.is_empty() {
            self.category.as_str().to_string()
        } else {
            format!("{}: {}", self.category, self.detail)
        }
    }

    pub fn from_log(s: &str) -> Option<Self> {
        let (cat, detail) = match s.split_once(": ") {
            Some((c, d)) => (c, d),
            None => (s, ""),
        };
        VerdictCategory::parse(cat).map(|category| Self::new(category, detail))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Str,
    Int,
    Float,
    Bool,
    List,
    Map,
    Any,
}

fn kind_of(ty: &str) -> Kind {
    match ty.to_ascii_lowercase().as_str() {
        "string" | "str" | "char" => Kind::Str,
        "integer" | "int" | "long" | "short" | "byte" => Kind::Int,
        "float" | "number" | "double" => Kind::Float,
        "boolean" | "bool" => Kind::Bool,
        "array" | "list" | "tuple" | "arraylist" => Kind::List,
        "dict" | "object" | "map" | "hashmap" => Kind::Map,
        _ => Kind::Any,
    }
}

/// Checks one value against a parameter schema; `Err` carries the reason.
pub fn check_value(value: &Value, spec: &ParamSpec) -> Result<(), String> {
    let ok = match (kind_of(&spec.ty), value) {
        (Kind::Any, _) => true,
        (Kind::Str, Value::Str(_)) => true,
        (Kind::Int, Value::Int(_)) => true,
        (Kind::Float, Value::Int(_) | Value::Float(_)) => true,
        (Kind::Bool, Value::Bool(_)) => true,
        (Kind::List, Value::List(_)) => true,
        (Kind::Map, Value::Map(_)) => true,
        _ => false,
    };
    if !ok {
        return Err(format!("expected {}, got {}", spec.ty, value.type_name()));
    }
    if let Some(allowed) = &spec.enum_values {
        if !allowed.contains(value) {
            return Err(format!("value {} not in enum", super::grammar::render_value(value)));
        }
    }
    if let (Some(items), Value::List(list)) = (&spec.items, value) {
        for (i, item) in list.iter().enumerate() {
            check_value(item, items).map_err(|e| format!("item {i}: {e}"))?;
        }
    }
    Ok(())
}

/// Validates a single call against the tool list. Total: always one verdict.
pub fn validate_call(call: &ToolCall, tools: &[ToolSpec]) -> ValidationVerdict {
    let Some(spec) = tools.iter().find(|t| t.name == call.function) else {
        return ValidationVerdict::new(VerdictCategory::WrongFunction, format!("no tool named {}", call.function));
    };
    let params = &spec.parameters;
    if let Some(missing) = params.required.iter().find(|r| !call.arguments.contains_key(*r)) {
        return ValidationVerdict::new(
            VerdictCategory::MissingParameter,
            format!("{}: missing required parameter {missing}", call.function),
        );
    }
    if let Some(extra) = call.arguments.keys().find(|k| !params.properties.contains_key(*k)) {
        return ValidationVerdict::new(
            VerdictCategory::UnexpectedParameter,
            format!("{}: unexpected parameter {extra}", call.function),
        );
    }
    for (name, value) in &call.arguments {
        let pspec = &params.properties[name];
        if *value == Value::Null && !params.required.contains(name) {
            continue;
        }
        if let Err(reason) = check_value(value, pspec) {
            return ValidationVerdict::new(VerdictCategory::ValueError, format!("{}.{name}: {reason}", call.function));
        }
    }
    ValidationVerdict::ok()
}

/// Validates a batch: one verdict per call, plus a trailing
/// `CALL_COUNT_ERROR` when `expected_count` is given and differs.
pub fn validate_batch(calls: &[ToolCall], tools: &[ToolSpec], expected_count: Option<usize>) -> Vec<ValidationVerdict> {
    let mut out: Vec<ValidationVerdict> = calls.iter().map(|c| validate_call(c, tools)).collect();
    if let Some(expected) = expected_count {
        if calls.len() != expected {
            out.push(ValidationVerdict::new(
                VerdictCategory::CallCountError,
                format!("expected {expected} calls, got {}", calls.len()),
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tools() -> Vec<ToolSpec> {
        serde_json::from_str(
            r#"[
            {"name": "cd", "description": "", "parameters": {"type": "dict",
                "properties": {"folder": {"type": "string"}}, "required": ["folder"]}},
            {"name": "currency_conversion.convert", "description": "", "parameters": {"type": "dict",
                "properties": {"amount": {"type": "integer"}, "from_currency": {"type": "string"},
                               "to_currency": {"type": "string"}},
                "required": ["amount", "from_currency", "to_currency"]}},
            {"name": "game.save_progress", "description": "", "parameters": {"type": "dict",
                "properties": {"stage": {"type": "integer"},
                               "mode": {"type": "string", "enum": ["easy", "hard"]},
                               "level": {"type": "string"}},
                "required": ["stage", "mode"]}},
            {"name": "fillFuelTank", "description": "", "parameters": {"type": "dict",
                "properties": {"fuelAmount": {"type": "float"}}, "required": ["fuelAmount"]}},
            {"name": "lockDoors", "description": "", "parameters": {"type": "dict",
                "properties": {"unlock": {"type": "boolean"},
                               "door": {"type": "array", "items": {"type": "string"}}},
                "required": ["unlock", "door"]}}
        ]"#,
        )
        .unwrap()
    }

    fn call(text: &str) -> ToolCall {
        crate::toolcall::parse_tool_calls(text).unwrap().remove(0)
    }

    #[test]
    fn exact_match_is_ok() {
        assert!(validate_call(&call(r#"[cd(folder="x")]"#), &tools()).is_ok());
    }

    #[test]
    fn missing_required() {
        let v = validate_call(&call("[currency_conversion.convert(amount=150, from_currency='EUR')]"), &tools());
        assert_eq!(v.category, VerdictCategory::MissingParameter);
        assert!(v.detail.contains("to_currency"));
    }

    #[test]
    fn wrong_type() {
        let v = validate_call(&call(r#"[game.save_progress(stage="seven", mode="easy")]"#), &tools());
        assert_eq!(v.category, VerdictCategory::ValueError);
    }

    #[test]
    fn enum_violation() {
        let v = validate_call(&call(r#"[game.save_progress(stage=1, mode="medium")]"#), &tools());
        assert_eq!(v.category, VerdictCategory::ValueError);
    }

    #[test]
    fn unknown_function_and_extra_param() {
        assert_eq!(validate_call(&call("[rm()]"), &tools()).category, VerdictCategory::WrongFunction);
        assert_eq!(
            validate_call(&call(r#"[cd(folder="x", force=True)]"#), &tools()).category,
            VerdictCategory::UnexpectedParameter
        );
    }

    #[test]
    fn float_accepts_integer_literal() {
        assert!(validate_call(&call("[fillFuelTank(fuelAmount=36)]"), &tools()).is_ok());
        assert!(validate_call(&call("[fillFuelTank(fuelAmount=36.8)]"), &tools()).is_ok());
    }

    #[test]
    fn list_items_checked() {
        assert!(validate_call(&call(r#"[lockDoors(unlock=False, door=["driver"])]"#), &tools()).is_ok());
        assert_eq!(
            validate_call(&call(r#"[lockDoors(unlock=False, door=[1])]"#), &tools()).category,
            VerdictCategory::ValueError
        );
    }

    #[test]
    fn optional_null_accepted() {
        assert!(validate_call(&call("[game.save_progress(stage=1, mode='easy', level=None)]"), &tools()).is_ok());
    }

    #[test]
    fn call_count_mismatch() {
        let calls = crate::toolcall::parse_tool_calls("[game.save_progress(stage=7, mode='easy')]").unwrap();
        let v = validate_batch(&calls, &tools(), Some(2));
        assert_eq!(v.last().unwrap().category, VerdictCategory::CallCountError);
        assert_eq!(validate_batch(&calls, &tools(), Some(1)).len(), 1);
    }

    #[test]
    fn log_form_round_trips() {
        for c in VerdictCategory::ALL {
            let v = ValidationVerdict::new(c, "d: x");
            assert_eq!(ValidationVerdict::from_log(&v.to_log()).unwrap(), v);
        }
        assert_eq!(ValidationVerdict::from_log("OK").unwrap(), ValidationVerdict::ok());
    }
}
