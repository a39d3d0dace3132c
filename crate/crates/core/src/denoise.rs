//! Commit schedules for parallel decoding in masked diffusion language
//! models.
//!
//! Schedulers see only per-position confidences (the top probability of the
//! predicted distribution) and decide which masked positions to commit.
//! Ties always go to the lowest position so every schedule is reproducible.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

pub type Token = u32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DenoiseError {
    #[error("invalid gate config: {0}")]
    InvalidGate(String),
    #[error("cannot remask {r} of {available} committed positions")]
    RemaskTooMany { r: usize, available: usize },
    #[error("schedule needs 1 <= steps <= length, got steps={steps} length={length}")]
    InvalidSchedule { length: usize, steps: usize },
    #[error("block size must be >= 1")]
    EmptyBlock,
    #[error("predictor failed: {0}")]
    Predictor(String),
}

/// Token buffer mid-decode. `None` is the mask.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenoiseState {
    pub tokens: Vec<Option<Token>>,
    /// Confidence per masked position from the latest prediction.
    pub confidences: BTreeMap<usize, f64>,
    pub step: usize,
}

impl DenoiseState {
    pub fn masked(len: usize) -> Self {
        Self {
            tokens: vec![None; len],
            ..Self::default()
        }
    }

    pub fn masked_positions(&self) -> Vec<usize> {
        (0..self.tokens.len()).filter(|&i| self.tokens[i].is_none()).collect()
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (&i, &c) in &self.confidences {
            if self.tokens.get(i).is_none_or(|t| t.is_some()) {
                out.push(format!("confidence at position {i}, which is not masked"));
            }
            if !(0.0..=1.0).contains(&c) {
                out.push(format!("confidence {c} at position {i} outside [0,1]"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateMode {
    Threshold,
    Factor,
}

pub const DEFAULT_TAU: f64 = 0.9;
pub const DEFAULT_GAMMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub mode: GateMode,
    pub tau: f64,
    pub gamma: f64,
}

impl GateConfig {
    pub fn new(mode: GateMode, tau: f64, gamma: f64) -> Result<Self, DenoiseError> {
        let cfg = Self { mode, tau, gamma };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn threshold(tau: f64) -> Result<Self, DenoiseError> {
        Self::new(GateMode::Threshold, tau, DEFAULT_GAMMA)
    }

    pub fn factor(gamma: f64) -> Result<Self, DenoiseError> {
        Self::new(GateMode::Factor, DEFAULT_TAU, gamma)
    }

    pub fn validate(&self) -> Result<(), DenoiseError> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(DenoiseError::InvalidGate(format!("tau must be in (0, 1], got {}", self.tau)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(DenoiseError::InvalidGate(format!("gamma must be > 0, got {}", self.gamma)));
        }
        Ok(())
    }

    /// Positions (indices into `confidences`) to commit this iteration.
    pub fn select(&self, confidences: &[f64]) -> BTreeSet<usize> {
        match self.mode {
            GateMode::Threshold => threshold_unmask(confidences, self),
            GateMode::Factor => factor_unmask(confidences, self),
        }
    }
}

/// Highest confidence, lowest index on ties. `None` for an empty slice.
pub fn argmax(confidences: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &c) in confidences.iter().enumerate() {
        if best.is_none_or(|b| c > confidences[b]) {
            best = Some(i);
        }
    }
    best
}

/// Indices sorted by confidence descending, lowest index first on ties.
fn ranked(confidences: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..confidences.len()).collect();
    idx.sort_by(|&a, &b| confidences[b].total_cmp(&confidences[a]).then(a.cmp(&b)));
    idx
}

/// Every position at or above `tau`; the single best one if none is.
pub fn threshold_unmask(confidences: &[f64], cfg: &GateConfig) -> BTreeSet<usize> {
    let picked: BTreeSet<usize> = (0..confidences.len())
        .filter(|&i| confidences[i] >= cfg.tau)
        .collect();
    if picked.is_empty() {
        argmax(confidences).into_iter().collect()
    } else {
        picked
    }
}

/// Products this close to gamma count as equal, so rounding in `1 - c`
/// cannot turn an exact tie into a pass.
const FACTOR_TIE_EPS: f64 = 1e-12;

/// Largest K with (K + 1)(1 - c_(K)) < gamma over the descending order.
pub fn factor_k(confidences: &[f64], gamma: f64) -> usize {
    let mut sorted = confidences.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    (1..=sorted.len())
        .rev()
        .find(|&k| gamma - (k as f64 + 1.0) * (1.0 - sorted[k - 1]) > FACTOR_TIE_EPS)
        .unwrap_or(0)
}

/// The top-K positions under the factor rule; the single best one if K = 0.
pub fn factor_unmask(confidences: &[f64], cfg: &GateConfig) -> BTreeSet<usize> {
    let k = factor_k(confidences, cfg.gamma).max(1).min(confidences.len());
    ranked(confidences).into_iter().take(k).collect()
}

/// The `r` least confident positions, lowest position first on ties.
pub fn low_confidence_remask(
    confidences_at_committed: &BTreeMap<usize, f64>,
    r: usize,
) -> Result<BTreeSet<usize>, DenoiseError> {
    if r > confidences_at_committed.len() {
        return Err(DenoiseError::RemaskTooMany {
            r,
            available: confidences_at_committed.len(),
        });
    }
    let mut entries: Vec<(usize, f64)> = confidences_at_committed.iter().map(|(&p, &c)| (p, c)).collect();
    entries.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(entries.into_iter().take(r).map(|(p, _)| p).collect())
}

/// Tokens committed at each of `steps` reverse steps, front-loading the
/// remainder.
pub fn plan_reverse_schedule(length: usize, steps: usize) -> Result<Vec<usize>, DenoiseError> {
    if steps == 0 || steps > length {
        return Err(DenoiseError::InvalidSchedule { length, steps });
    }
    let (base, extra) = (length / steps, length % steps);
    Ok((0..steps).map(|i| base + usize::from(i < extra)).collect())
}

/// Argmax token and its probability for one masked position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub token: Token,
    pub confidence: f64,
}

pub trait MaskPredictor {
    /// Predicts every masked position of `tokens`, keyed by position.
    fn predict(&self, tokens: &[Option<Token>], prompt: &[Token]) -> Result<BTreeMap<usize, Prediction>, DenoiseError>;
}

/// Fixed per-position answers; positions missing from the table predict
/// `default` with confidence 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct TablePredictor {
    pub table: BTreeMap<usize, Prediction>,
    pub default: Token,
}

impl MaskPredictor for TablePredictor {
    fn predict(&self, tokens: &[Option<Token>], _prompt: &[Token]) -> Result<BTreeMap<usize, Prediction>, DenoiseError> {
        Ok((0..tokens.len())
            .filter(|&i| tokens[i].is_none())
            .map(|i| {
                let p = self.table.get(&i).copied().unwrap_or(Prediction {
                    token: self.default,
                    confidence: 0.5,
                });
                (i, p)
            })
            .collect())
    }
}

/// Pseudo-random lookup predictor: the answer for a position is a pure
/// function of (seed, prompt, position, number of committed tokens), so
/// confidences shift as decoding proceeds.
#[derive(Debug, Clone, PartialEq)]
pub struct SeededPredictor {
    pub seed: u64,
    /// Tokens are drawn from `0..vocab`.
    pub vocab: Token,
    /// Emitted with probability `1 / eos_every` per draw; 0 disables it.
    pub eos: Token,
    pub eos_every: u64,
}

impl SeededPredictor {
    fn draw(&self, prompt: &[Token], position: usize, committed: usize) -> Prediction {
        let mut key = Vec::with_capacity(prompt.len() * 4 + 16);
        for t in prompt {
            key.extend_from_slice(&t.to_le_bytes());
        }
        key.extend_from_slice(&(position as u64).to_le_bytes());
        key.extend_from_slice(&(committed as u64).to_le_bytes());
        let mut r = rng::seeded(self.seed ^ rng::fnv1a(&key));
        let token = if self.eos_every > 0 && rng::below(&mut r, self.eos_every) == 0 {
            self.eos
        } else {
            rng::below(&mut r, u64::from(self.vocab.max(1))) as Token
        };
        let confidence = rng::below(&mut r, 101) as f64 / 100.0;
        Prediction { token, confidence }
    }
}

impl MaskPredictor for SeededPredictor {
    fn predict(&self, tokens: &[Option<Token>], prompt: &[Token]) -> Result<BTreeMap<usize, Prediction>, DenoiseError> {
        let committed = tokens.iter().filter(|t| t.is_some()).count();
        Ok((0..tokens.len())
            .filter(|&i| tokens[i].is_none())
            .map(|i| (i, self.draw(prompt, i, committed)))
            .collect())
    }
}

/// Checks that a prediction covers exactly the masked positions with
/// confidences in [0, 1].
fn check_prediction(tokens: &[Option<Token>], pred: &BTreeMap<usize, Prediction>) -> Result<(), DenoiseError> {
    let masked: Vec<usize> = (0..tokens.len()).filter(|&i| tokens[i].is_none()).collect();
    if !pred.keys().copied().eq(masked.iter().copied()) {
        return Err(DenoiseError::Predictor("prediction does not cover exactly the masked positions".into()));
    }
    if let Some((i, p)) = pred.iter().find(|(_, p)| !(0.0..=1.0).contains(&p.confidence)) {
        return Err(DenoiseError::Predictor(format!(
            "confidence {} at position {i} outside [0,1]",
            p.confidence
        )));
    }
    Ok(())
}

/// One commit in a decode trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub block: usize,
    pub iteration: usize,
    pub position: usize,
    pub token: Token,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockOutput {
    /// Decoded tokens, cut before the first EOS.
    pub tokens: Vec<Token>,
    /// True when `max_blocks` ran out before any EOS.
    pub truncated: bool,
    /// Gate iterations used by each block.
    pub iterations: Vec<usize>,
    pub trace: Vec<TraceRow>,
}

/// Semi-autoregressive decoding: append a block of masks, commit gate-chosen
/// positions until the block is full, repeat. Stops after the block that
/// produced the first EOS, or after `max_blocks`.
pub fn block_decode(
    predictor: &dyn MaskPredictor,
    prompt: &[Token],
    block_size: usize,
    gate: &GateConfig,
    max_blocks: usize,
    eos: Token,
) -> Result<BlockOutput, DenoiseError> {
    if block_size == 0 {
        return Err(DenoiseError::EmptyBlock);
    }
    gate.validate()?;
    let mut buf: Vec<Option<Token>> = Vec::new();
    let mut iterations = Vec::new();
    let mut trace = Vec::new();
    for block in 0..max_blocks {
        let start = buf.len();
        buf.resize(start + block_size, None);
        let mut iters = 0;
        while buf[start..].iter().any(Option::is_none) {
            iters += 1;
            let pred = predictor.predict(&buf, prompt)?;
            check_prediction(&buf, &pred)?;
            // only the current block is eligible; earlier blocks are full
            let positions: Vec<usize> = pred.keys().copied().filter(|&p| p >= start).collect();
            let conf: Vec<f64> = positions.iter().map(|p| pred[p].confidence).collect();
            for local in gate.select(&conf) {
                let pos = positions[local];
                let p = pred[&pos];
                buf[pos] = Some(p.token);
                trace.push(TraceRow {
                    block,
                    iteration: iters,
                    position: pos,
                    token: p.token,
                    confidence: p.confidence,
                });
            }
        }
        iterations.push(iters);
        let decoded: Vec<Token> = buf.iter().map(|t| t.expect("block fully committed")).collect();
        if let Some(cut) = decoded.iter().position(|&t| t == eos) {
            return Ok(BlockOutput {
                tokens: decoded[..cut].to_vec(),
                truncated: false,
                iterations,
                trace,
            });
        }
    }
    Ok(BlockOutput {
        tokens: buf.into_iter().map(|t| t.expect("block fully committed")).collect(),
        truncated: true,
        iterations,
        trace,
    })
}

/// One reverse step of full-sequence decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct ReverseStep {
    pub step: usize,
    pub committed: BTreeSet<usize>,
    pub remasked: BTreeSet<usize>,
}

/// Decodes `length` masked tokens in `steps` reverse steps. Each step
/// predicts every masked position, keeps the scheduled number of most
/// confident predictions and remasks the rest.
pub fn reverse_decode(
    predictor: &dyn MaskPredictor,
    prompt: &[Token],
    length: usize,
    steps: usize,
) -> Result<(Vec<Token>, Vec<ReverseStep>), DenoiseError> {
    let schedule = plan_reverse_schedule(length, steps)?;
    let mut state = DenoiseState::masked(length);
    let mut trace = Vec::with_capacity(steps);
    for (t, &keep) in schedule.iter().enumerate() {
        let pred = predictor.predict(&state.tokens, prompt)?;
        check_prediction(&state.tokens, &pred)?;
        state.confidences = pred.iter().map(|(&p, v)| (p, v.confidence)).collect();
        let remasked = low_confidence_remask(&state.confidences, pred.len() - keep)?;
        let committed: BTreeSet<usize> = pred.keys().copied().filter(|p| !remasked.contains(p)).collect();
        for &p in &committed {
            state.tokens[p] = Some(pred[&p].token);
        }
        state.step = t + 1;
        trace.push(ReverseStep {
            step: t + 1,
            committed,
            remasked,
        });
    }
    let tokens = state.tokens.into_iter().map(|t| t.expect("schedule commits every position")).collect();
    Ok((tokens, trace))
}

/// CSV dump of a block decode trace, header included.
pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("block,iteration,position,token,confidence\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{:.2}", r.block, r.iteration, r.position, r.token, r.confidence);
    }
    out
}
