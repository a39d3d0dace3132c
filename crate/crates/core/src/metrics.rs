//! Aggregate metrics over episode records.
//!
//! Rates, retry loops, failure histograms, throughput and the early-exit
//! trade-off (steps saved against progress lost). Reports group records
//! by variant, then by suite, in order of first appearance.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EpisodeRecord, ExitReason};
use crate::toolcall::VerdictCategory;

pub const DEFAULT_RETRY_THRESHOLD: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no records")]
    Empty,
    #[error("exit step {exit_step} outside 1..={full_len}")]
    ExitOutOfRange { full_len: usize, exit_step: usize },
}

pub fn success_rate(records: &[EpisodeRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(records.iter().filter(|r| r.success).count() as f64 / records.len() as f64)
}

pub fn failure_rate(records: &[EpisodeRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(records.iter().filter(|r| !r.success).count() as f64 / records.len() as f64)
}

pub fn progress_rate(records: &[EpisodeRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(records.iter().map(|r| r.progress).sum::<f64>() / records.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryLoop {
    pub action: String,
    /// 1-based step of the first repetition.
    pub start_step: usize,
    pub length: usize,
}

fn squash(action: &str) -> String {
    action.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Maximal runs of one repeated action at least `threshold` long.
pub fn detect_retry_loops<S: AsRef<str>>(actions: &[S], threshold: usize) -> Vec<RetryLoop> {
    let norm: Vec<String> = actions.iter().map(|a| squash(a.as_ref())).collect();
    let mut out = Vec::new();
    let mut start = 0;
    while start < norm.len() {
        let mut end = start + 1;
        while end < norm.len() && norm[end] == norm[start] {
            end += 1;
        }
        if end - start >= threshold.max(1) {
            out.push(RetryLoop {
                action: norm[start].clone(),
                start_step: start + 1,
                length: end - start,
            });
        }
        start = end;
    }
    out
}

/// Share of the full trajectory skipped by exiting at `exit_step`.
pub fn redundancy_reduction(full_len: usize, exit_step: usize) -> Result<f64, MetricsError> {
    if exit_step < 1 || exit_step > full_len {
        return Err(MetricsError::ExitOutOfRange { full_len, exit_step });
    }
    Ok((full_len - exit_step) as f64 / full_len as f64)
}

/// Progress lost by exiting early; an exit can never gain progress.
pub fn progress_degradation(full_progress: f64, exit_progress: f64) -> f64 {
    (full_progress - exit_progress).max(0.0)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureHistogram {
    pub categories: BTreeMap<String, u64>,
    /// The same counts folded into schema / parameter_value / call_count.
    pub coarse: BTreeMap<String, u64>,
}

impl FailureHistogram {
    pub fn total(&self) -> u64 {
        self.categories.values().sum()
    }

    fn add(&mut self, category: VerdictCategory) {
        if let Some(coarse) = category.coarse() {
            *self.categories.entry(category.as_str().to_string()).or_default() += 1;
            *self.coarse.entry(coarse.to_string()).or_default() += 1;
        }
    }
}

pub fn categorize_failures(verdicts: &[VerdictCategory]) -> FailureHistogram {
    let mut h = FailureHistogram::default();
    for &v in verdicts {
        h.add(v);
    }
    h
}

/// Category of a logged verdict line such as `VALUE_ERROR: f.x: ...`.
pub fn verdict_category(logged: &str) -> Option<VerdictCategory> {
    VerdictCategory::parse(logged.split(':').next().unwrap_or("").trim())
}

/// Every verdict logged in a tool-calling record.
pub fn record_verdicts(record: &EpisodeRecord) -> Vec<VerdictCategory> {
    record
        .turns
        .iter()
        .flat_map(|t| &t.batches)
        .flat_map(|b| &b.verdicts)
        .filter_map(|v| verdict_category(v))
        .collect()
}

/// Generated tokens per second of backend time; `None` when no time was
/// recorded.
pub fn throughput(records: &[EpisodeRecord]) -> Option<f64> {
    let tokens: u64 = records.iter().map(|r| r.generated_tokens).sum();
    let wall: f64 = records.iter().map(|r| r.wall_seconds).sum();
    (wall > 0.0).then(|| tokens as f64 / wall)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteMetrics {
    pub suite: String,
    pub episodes: usize,
    pub success_rate: f64,
    pub progress_rate: f64,
    pub retry_loop_count: usize,
    pub retry_loops_per_episode: f64,
    pub failure_histogram: FailureHistogram,
    pub tokens_per_second: Option<f64>,
    pub exit_reasons: BTreeMap<ExitReason, usize>,
}

impl SuiteMetrics {
    pub fn compute(suite: &str, records: &[EpisodeRecord], retry_threshold: usize) -> Result<Self, MetricsError> {
        let loops: usize = records
            .iter()
            .map(|r| detect_retry_loops(&r.steps.actions(), retry_threshold).len())
            .sum();
        let verdicts: Vec<VerdictCategory> = records.iter().flat_map(record_verdicts).collect();
        let mut exit_reasons = BTreeMap::new();
        for r in records {
            *exit_reasons.entry(r.exit_reason).or_default() += 1;
        }
        Ok(Self {
            suite: suite.to_string(),
            episodes: records.len(),
            success_rate: success_rate(records)?,
            progress_rate: progress_rate(records)?,
            retry_loop_count: loops,
            retry_loops_per_episode: loops as f64 / records.len() as f64,
            failure_histogram: categorize_failures(&verdicts),
            tokens_per_second: throughput(records),
            exit_reasons,
        })
    }
}

/// Early-exit runs paired with the matching run without the verifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyExitMetrics {
    /// Variant the exits are measured against.
    pub baseline: String,
    pub pairs: usize,
    pub early_exits: usize,
    pub redundancy_reduction: f64,
    pub progress_degradation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantBlock {
    pub variant: String,
    pub suites: Vec<SuiteMetrics>,
    /// Unweighted mean over suites.
    pub avg_success_rate: f64,
    pub avg_progress_rate: f64,
    pub retry_loop_count: usize,
    pub retry_loops_per_episode: f64,
    pub tokens_per_second: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_exit: Option<EarlyExitMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub retry_threshold: usize,
    pub blocks: Vec<VariantBlock>,
    pub skipped_lines: usize,
}

fn without_verifier(config: &BTreeMap<String, String>) -> BTreeMap<String, String> {
    let mut c = config.clone();
    c.remove("verifier");
    c.remove("k_earlyexit");
    c
}

/// Pairs each episode of `exits` with the same (suite, task, seed) in
/// `baseline` and averages the trade-off over the pairs.
pub fn early_exit_tradeoff(
    baseline_name: &str,
    baseline: &[&EpisodeRecord],
    exits: &[&EpisodeRecord],
) -> Option<EarlyExitMetrics> {
    let index: BTreeMap<(&str, &str, u64), &EpisodeRecord> = baseline
        .iter()
        .map(|r| ((r.suite.as_str(), r.task_id.as_str(), r.seed), *r))
        .collect();
    let mut pairs = 0;
    let mut exited = 0;
    let mut saved = 0.0;
    let mut lost = 0.0;
    for r in exits {
        let Some(full) = index.get(&(r.suite.as_str(), r.task_id.as_str(), r.seed)) else {
            continue;
        };
        let full_len = full.steps.len();
        if full_len == 0 {
            continue;
        }
        let exit_step = r.steps.len().clamp(1, full_len);
        pairs += 1;
        exited += usize::from(r.exit_reason == ExitReason::EarlyExit);
        saved += redundancy_reduction(full_len, exit_step).expect("clamped");
        lost += progress_degradation(full.progress, r.progress);
    }
    (pairs > 0).then(|| EarlyExitMetrics {
        baseline: baseline_name.to_string(),
        pairs,
        early_exits: exited,
        redundancy_reduction: saved / pairs as f64,
        progress_degradation: lost / pairs as f64,
    })
}

impl MetricsReport {
    pub fn build(records: &[EpisodeRecord], retry_threshold: usize, skipped_lines: usize) -> Self {
        let mut by_variant: IndexMap<&str, Vec<&EpisodeRecord>> = IndexMap::new();
        for r in records {
            by_variant.entry(r.variant.as_str()).or_default().push(r);
        }
        let mut blocks = Vec::new();
        for (variant, recs) in &by_variant {
            let mut by_suite: IndexMap<&str, Vec<EpisodeRecord>> = IndexMap::new();
            for r in recs {
                by_suite.entry(r.suite.as_str()).or_default().push((*r).clone());
            }
            let suites: Vec<SuiteMetrics> = by_suite
                .iter()
                .map(|(s, rs)| SuiteMetrics::compute(s, rs, retry_threshold).expect("nonempty group"))
                .collect();
            let n = suites.len() as f64;
            let all: Vec<EpisodeRecord> = recs.iter().map(|r| (*r).clone()).collect();
            let loops: usize = suites.iter().map(|s| s.retry_loop_count).sum();

            let exits: Vec<&EpisodeRecord> = recs
                .iter()
                .copied()
                .filter(|r| r.module_config.contains_key("verifier"))
                .collect();
            let early_exit = exits.first().and_then(|probe| {
                let want = without_verifier(&probe.module_config);
                let (base_name, base) = by_variant.iter().find_map(|(v, rs)| {
                    let matching: Vec<&EpisodeRecord> =
                        rs.iter().copied().filter(|r| r.module_config == want).collect();
                    (v != variant && !matching.is_empty()).then_some((*v, matching))
                })?;
                early_exit_tradeoff(base_name, &base, &exits)
            });

            blocks.push(VariantBlock {
                variant: variant.to_string(),
                avg_success_rate: suites.iter().map(|s| s.success_rate).sum::<f64>() / n,
                avg_progress_rate: suites.iter().map(|s| s.progress_rate).sum::<f64>() / n,
                retry_loop_count: loops,
                retry_loops_per_episode: loops as f64 / recs.len() as f64,
                tokens_per_second: throughput(&all),
                suites,
                early_exit,
            });
        }
        Self {
            retry_threshold,
            blocks,
            skipped_lines,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Fixed-width text rendering: one table of success and progress
    /// percentages per variant, followed by loop, throughput and failure
    /// lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, b) in self.blocks.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let title = if b.variant.is_empty() { "default" } else { &b.variant };
            let _ = writeln!(out, "== {title} ==");
            let width = b.suites.iter().map(|s| s.suite.len()).max().unwrap_or(0).max(8);
            let _ = writeln!(out, "{:<width$}  {:>8}  {:>8}  {:>8}", "Suite", "Episodes", "Success", "Progress");
            for s in &b.suites {
                let _ = writeln!(
                    out,
                    "{:<width$}  {:>8}  {:>8.1}  {:>8.1}",
                    s.suite,
                    s.episodes,
                    s.success_rate * 100.0,
                    s.progress_rate * 100.0
                );
            }
            let episodes: usize = b.suites.iter().map(|s| s.episodes).sum();
            let _ = writeln!(
                out,
                "{:<width$}  {:>8}  {:>8.1}  {:>8.1}",
                "Avg",
                episodes,
                b.avg_success_rate * 100.0,
                b.avg_progress_rate * 100.0
            );
            let _ = writeln!(
                out,
                "retry loops (>= {}): {} total, {:.2} per episode",
                self.retry_threshold, b.retry_loop_count, b.retry_loops_per_episode
            );
            match b.tokens_per_second {
                Some(t) => {
                    let _ = writeln!(out, "throughput: {t:.1} tokens/s");
                }
                None => out.push_str("throughput: n/a\n"),
            }
            let mut failures = FailureHistogram::default();
            for s in &b.suites {
                for (k, v) in &s.failure_histogram.categories {
                    *failures.categories.entry(k.clone()).or_default() += v;
                }
                for (k, v) in &s.failure_histogram.coarse {
                    *failures.coarse.entry(k.clone()).or_default() += v;
                }
            }
            if failures.total() > 0 {
                let join = |m: &BTreeMap<String, u64>| {
                    m.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
                };
                let _ = writeln!(out, "failures: {}", join(&failures.categories));
                let _ = writeln!(out, "failure families: {}", join(&failures.coarse));
            }
            if let Some(e) = &b.early_exit {
                let _ = writeln!(
                    out,
                    "early exit vs {}: {} of {} exited, redundancy reduction {:.3}, progress degradation {:.3}",
                    e.baseline, e.early_exits, e.pairs, e.redundancy_reduction, e.progress_degradation
                );
            }
        }
        if self.skipped_lines > 0 {
            let _ = writeln!(out, "\n{} line(s) skipped", self.skipped_lines);
        }
        out
    }
}
