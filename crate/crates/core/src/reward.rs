//! Verifiable rewards and GRPO group computations.
//!
//! ```text
//! R_format = 1 if the response follows the map/think/answer schema, else 0
//! R_mc     = 1 if the predicted letter equals the truth, else 0
//! R_num    = (1/N) Σ_i 1(|ŷ − y| / y ≤ 1 − θ_i)
//! R        = α·R_format + (1 − α)·R_task
//! A_i      = (R_i − mean(R)) / std(R)
//! J        = (1/G) Σ_i min(ρ_i·A_i, clip(ρ_i, 1 − ε, 1 + ε)·A_i)
//! ```

use serde::{Deserialize, Serialize};

use crate::cot::{
    answer_text_fallback, check_format, extract_from_text, parse_response, ParsedAnswer,
};
use crate::qa::{Answer, ChoiceLetter, QAPair, TaskType};

/// Slack on the relative-error comparison, absorbing the representation
/// error of the decimal threshold ladder (`1 − 0.9` is not exactly `0.1`).
pub const THRESHOLD_SLACK: f64 = 1e-9;

/// Confidence thresholds 0.50, 0.55, …, 0.95.
pub const DEFAULT_THRESHOLDS: [f64; 10] =
    [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RewardError {
    #[error("invalid reward config: {0}")]
    Config(String),
    #[error("group size {0} < 2")]
    GroupTooSmall(usize),
    #[error("length mismatch: {ratios} ratios vs {advantages} advantages")]
    LengthMismatch { ratios: usize, advantages: usize },
    #[error("empty group")]
    Empty,
    #[error("non-positive probability ratio {0}")]
    NonPositiveRatio(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub alpha: f64,
    pub thresholds: Vec<f64>,
    pub zero_truth_epsilon: f64,
    pub clip_epsilon: f64,
    pub std_floor: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            zero_truth_epsilon: 0.01,
            clip_epsilon: 0.2,
            std_floor: 1e-6,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        let bad = |m: &str| Err(RewardError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        if self.thresholds.is_empty() {
            return bad("thresholds must be non-empty");
        }
        if self.thresholds.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return bad("thresholds must lie in (0, 1)");
        }
        if self.thresholds.windows(2).any(|w| w[1] <= w[0]) {
            return bad("thresholds must be strictly increasing");
        }
        if !(self.clip_epsilon > 0.0) {
            return bad("clip epsilon must be positive");
        }
        if !(self.zero_truth_epsilon >= 0.0) || !(self.std_floor > 0.0) {
            return bad("epsilon and std floor must be non-negative / positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_format: f64,
    pub r_task: f64,
    pub r_total: f64,
    pub task: TaskType,
}

pub fn format_reward(raw: &str) -> f64 {
    if check_format(raw) {
        1.0
    } else {
        0.0
    }
}

pub fn mc_reward(pred: ChoiceLetter, truth: ChoiceLetter) -> f64 {
    if pred == truth {
        1.0
    } else {
        0.0
    }
}

/// Fraction of confidence thresholds whose relative-error tolerance the
/// prediction meets. A zero truth uses an absolute tolerance instead.
pub fn num_reward(pred: f64, truth: f64, cfg: &RewardConfig) -> f64 {
    if !pred.is_finite() || !truth.is_finite() {
        return 0.0;
    }
    if truth == 0.0 {
        return if pred.abs() <= cfg.zero_truth_epsilon {
            1.0
        } else {
            0.0
        };
    }
    let rel = (pred - truth).abs() / truth.abs();
    let hits = cfg
        .thresholds
        .iter()
        .filter(|&&theta| rel <= 1.0 - theta + THRESHOLD_SLACK)
        .count();
    hits as f64 / cfg.thresholds.len() as f64
}

pub fn combined_reward(
    r_format: f64,
    r_task: f64,
    task: TaskType,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    RewardBreakdown {
        r_format,
        r_task,
        r_total: cfg.alpha * r_format + (1.0 - cfg.alpha) * r_task,
        task,
    }
}

/// Standardizes rewards within a group using the population standard
/// deviation, floored at `cfg.std_floor`. Constant groups map to all zeros.
pub fn group_advantages(rewards: &[f64], cfg: &RewardConfig) -> Result<Vec<f64>, RewardError> {
    let g = rewards.len();
    if g < 2 {
        return Err(RewardError::GroupTooSmall(g));
    }
    if rewards.iter().all(|r| *r == rewards[0]) {
        return Ok(vec![0.0; g]);
    }
    let mean = rewards.iter().sum::<f64>() / g as f64;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / g as f64;
    let std = var.sqrt().max(cfg.std_floor);
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

pub fn clip(ratio: f64, epsilon: f64) -> f64 {
    ratio.clamp(1.0 - epsilon, 1.0 + epsilon)
}

/// Per-response surrogate terms `min(ρ·A, clip(ρ)·A)`.
pub fn surrogate_terms(
    ratios: &[f64],
    advantages: &[f64],
    cfg: &RewardConfig,
) -> Result<Vec<f64>, RewardError> {
    if ratios.len() != advantages.len() {
        return Err(RewardError::LengthMismatch {
            ratios: ratios.len(),
            advantages: advantages.len(),
        });
    }
    if ratios.is_empty() {
        return Err(RewardError::Empty);
    }
    ratios
        .iter()
        .zip(advantages)
        .map(|(&r, &a)| {
            if !(r > 0.0) {
                return Err(RewardError::NonPositiveRatio(r));
            }
            Ok((r * a).min(clip(r, cfg.clip_epsilon) * a))
        })
        .collect()
}

/// Group mean of the clipped surrogate, without a KL term.
pub fn clipped_objective(
    ratios: &[f64],
    advantages: &[f64],
    cfg: &RewardConfig,
) -> Result<f64, RewardError> {
    let terms = surrogate_terms(ratios, advantages, cfg)?;
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

/// Task reward alone: extraction failures and answer-kind mismatches score 0.
pub fn task_reward(qa: &QAPair, raw: &str, cfg: &RewardConfig) -> f64 {
    let text = match parse_response(raw) {
        Ok(resp) => resp.answer,
        Err(_) => answer_text_fallback(raw).to_string(),
    };
    match (extract_from_text(&text, qa.task), &qa.answer) {
        (Ok(ParsedAnswer::Choice(pred)), Answer::Choice { letter, .. }) => mc_reward(pred, *letter),
        (Ok(ParsedAnswer::Numeric(pred)), Answer::Numeric { value, .. }) => {
            num_reward(pred, *value, cfg)
        }
        _ => 0.0,
    }
}

/// Format plus task reward for one response. Never fails.
pub fn score_response(qa: &QAPair, raw: &str, cfg: &RewardConfig) -> RewardBreakdown {
    combined_reward(format_reward(raw), task_reward(qa, raw, cfg), qa.task, cfg)
}

/// One sampled response within a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub raw: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
}

/// G responses to one query with their rewards and, once computed, advantages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRollout {
    pub query_id: String,
    pub responses: Vec<ResponseRecord>,
    pub rewards: Vec<f64>,
    #[serde(default)]
    pub advantages: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratios: Option<Vec<f64>>,
}

impl GroupRollout {
    /// Scores every response against `qa`.
    pub fn score(qa: &QAPair, responses: Vec<ResponseRecord>, cfg: &RewardConfig) -> Self {
        let rewards = responses
            .iter()
            .map(|r| score_response(qa, &r.raw, cfg).r_total)
            .collect();
        let ratios = responses
            .iter()
            .map(|r| r.ratio)
            .collect::<Option<Vec<f64>>>();
        GroupRollout {
            query_id: qa.qa_id.clone(),
            responses,
            rewards,
            advantages: Vec::new(),
            ratios,
        }
    }

    pub fn compute_advantages(&mut self, cfg: &RewardConfig) -> Result<(), RewardError> {
        self.advantages = group_advantages(&self.rewards, cfg)?;
        Ok(())
    }

    /// Surrogate objective, if ratios are known and advantages computed.
    pub fn objective(&self, cfg: &RewardConfig) -> Option<Result<f64, RewardError>> {
        let ratios = self.ratios.as_ref()?;
        if self.advantages.is_empty() {
            return None;
        }
        Some(clipped_objective(ratios, &self.advantages, cfg))
    }
}
