//! Strategies shared by the property suites.
#![allow(dead_code)]

use agent_harness::model::{ToolCall, Value};
use indexmap::IndexMap;
use proptest::prelude::*;

/// Identifier that is not one of the Python literals.
pub fn ident() -> impl Strategy<Value = String> {
    "[A-Za-z_][A-Za-z0-9_]{0,7}".prop_filter("reserved literal", |s| !matches!(s.as_str(), "True" | "False" | "None"))
}

/// Argument values nested at most `depth` levels.
pub fn value(depth: u32) -> BoxedStrategy<Value> {
    let leaf = prop_oneof![
        any::<String>().prop_map(Value::Str),
        "[ -~]{0,10}".prop_map(Value::Str),
        any::<i64>().prop_map(Value::Int),
        any::<f64>().prop_filter("finite", |f| f.is_finite()).prop_map(Value::Float),
        any::<bool>().prop_map(Value::Bool),
        Just(Value::Null),
    ];
    if depth <= 1 {
        return leaf.boxed();
    }
    let inner = value(depth - 1);
    prop_oneof![
        3 => leaf,
        1 => prop::collection::vec(inner.clone(), 0..4).prop_map(Value::List),
        1 => prop::collection::vec((any::<String>(), inner), 0..4)
            .prop_map(|kv| Value::Map(kv.into_iter().collect::<IndexMap<_, _>>())),
    ]
    .boxed()
}

/// A call with an optionally dotted name and up to three arguments.
pub fn call() -> impl Strategy<Value = ToolCall> {
    let name = (ident(), prop::option::of(ident())).prop_map(|(a, b)| match b {
        Some(b) => format!("{a}.{b}"),
        None => a,
    });
    let args = prop::collection::vec((ident(), value(3)), 0..4);
    (name, args).prop_map(|(function, args)| ToolCall {
        function,
        arguments: args.into_iter().collect(),
    })
}

pub fn calls() -> impl Strategy<Value = Vec<ToolCall>> {
    prop::collection::vec(call(), 1..5)
}
