//! Agent evaluation harness.
//!
//! Runs ReAct-style embodied episodes and multi-turn tool-calling episodes
//! against pluggable policy backends, with optional memory, early-exit,
//! tool-selection and tool-call repair modules. Also ships the
//! parallel-decoding unmask schedules used by diffusion language models and
//! the metrics used to analyse agent failures.

pub mod denoise;
pub mod envs;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod policy;
pub mod prompts;
pub mod react;
pub mod rng;
pub mod toolcall;
