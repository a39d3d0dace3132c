//! Tool-calling engine: call grammar, schema validation, mock execution,
//! selector and editor modules, and the multi-turn episode runner.

pub mod editor;
mod grammar;
pub mod runner;
pub mod selector;
pub mod suite;
pub mod validate;
pub mod world;

pub use editor::{edit_tool_call, heuristic_repair, EditOutcome, HeuristicEditor};
pub use grammar::{
    parse_bare_calls, parse_bare_calls_prefix, parse_call_batches, parse_tool_calls, parse_tool_calls_prefix,
    parse_value, render_call, render_float, render_tool_calls, render_value, ParseError,
};
pub use runner::{classify_relevance, run_tool_episode, ToolLimits, ToolWiring};
pub use selector::{select_tools, Selection, SelectorContext};
pub use suite::{load_suite, parse_suite, Category, RelevanceExpected, SuiteError, ToolSuite};
pub use validate::{validate_batch, validate_call, ValidationVerdict, VerdictCategory};
pub use world::{execute_calls, judge_turn, MockWorld};
