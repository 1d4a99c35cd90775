//! Rewards, supervised warm-up and group sequence policy optimization of a
//! small differentiable policy.
//!
//! The policy ([`ToyPolicy`]) emits a short token sequence per decision: three
//! binary tag tokens followed, when the action tag is emitted, by one action
//! token. That is enough structure to exercise format and action rewards,
//! length-normalized sequence ratios and per-token KL estimates.

mod checkpoint;
mod featurize;
mod gspo;
mod sft;
mod synthetic;
mod toy;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{parse_response, tag_presence, HighLevelDecision};
use crate::waypoints::GroundTruth;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use featurize::featurize;
pub use gspo::{
    group_advantages, gspo_objective, sequence_ratio, GroupRollout, KlPlacement, Member, Objective,
    RLConfig, RatioLevel, ADVANTAGE_EPS,
};
pub use sft::{sft_loss, sft_target, train_sft, SftConfig};
pub use synthetic::{synthetic_prompts, SyntheticConfig};
pub use toy::{
    render, sequence_reward, Token, ToyAction, ToyPolicy, ToyPrompt, N_FEATURES, N_PARAMS,
};
pub use train::{
    evaluate_toy, train_gspo, write_curve_csv, Adam, CurvePoint, ToyEval, TrainConfig, TrainOutcome,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("group of size {0} is too small (need at least 2)")]
    GroupTooSmall(usize),
    #[error("log-prob sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty token sequence")]
    EmptySequence,
    #[error("non-finite log-probability")]
    NonFiniteLogProb,
    #[error("parameters became non-finite at step {step}")]
    Divergence { step: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Weights of the format and action rewards; they sum to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardWeights {
    pub format: f64,
    pub action: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            format: 0.1,
            action: 0.9,
        }
    }
}

impl RewardWeights {
    /// Weights with `format` on the format reward and the rest on the action.
    pub fn with_format(format: f64) -> Self {
        Self {
            format,
            action: 1.0 - format,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub format: f64,
    pub action: f64,
    pub total: f64,
}

/// Score a raw response against the correct decision. `labels` are the
/// letters shown for the decision; a letter outside them earns no action
/// reward.
pub fn compute_reward(
    text: &str,
    gt: GroundTruth,
    labels: &[char],
    weights: RewardWeights,
) -> RewardBreakdown {
    let format = if tag_presence(text).iter().all(|&p| p) {
        1.0
    } else {
        0.0
    };
    let action = match parse_response(text, labels) {
        Ok(p) => match (p.decision, gt) {
            (HighLevelDecision::GoTo(a), GroundTruth::Label(b)) if a == b => 1.0,
            (HighLevelDecision::Stop, GroundTruth::Stop) => 1.0,
            (HighLevelDecision::TurnAround, GroundTruth::TurnAround) => 1.0,
            _ => 0.0,
        },
        Err(_) => 0.0,
    };
    RewardBreakdown {
        format,
        action,
        total: weights.format * format + weights.action * action,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LABELS: [char; 3] = ['B', 'D', 'Q'];

    fn text(action: &str) -> String {
        format!("<think>t</think><think_summary>s</think_summary><action>{action}</action>")
    }

    #[test]
    fn correct_letter_full_reward() {
        let r = compute_reward(
            &text("D"),
            GroundTruth::Label('D'),
            &LABELS,
            RewardWeights::default(),
        );
        assert_eq!(r.total, 1.0);
    }

    #[test]
    fn wrong_letter_format_only() {
        let r = compute_reward(
            &text("B"),
            GroundTruth::Label('D'),
            &LABELS,
            RewardWeights::default(),
        );
        assert_eq!((r.format, r.action), (1.0, 0.0));
        assert!((r.total - 0.1).abs() < 1e-12);
    }

    #[test]
    fn missing_action_tag_scores_zero() {
        let r = compute_reward(
            "<think>t</think><think_summary>s</think_summary>",
            GroundTruth::Label('D'),
            &LABELS,
            RewardWeights::default(),
        );
        assert_eq!(r.total, 0.0);
    }

    #[test]
    fn stop_matches_stop() {
        let r = compute_reward(
            &text("stop"),
            GroundTruth::Stop,
            &LABELS,
            RewardWeights::default(),
        );
        assert_eq!(r.total, 1.0);
        let r = compute_reward(
            &text("D"),
            GroundTruth::Stop,
            &LABELS,
            RewardWeights::default(),
        );
        assert!((r.total - 0.1).abs() < 1e-12);
    }

    #[test]
    fn hallucinated_letter_earns_no_action_reward() {
        let r = compute_reward(
            &text("Z"),
            GroundTruth::Label('Z'),
            &LABELS,
            RewardWeights::default(),
        );
        assert_eq!(r.action, 0.0);
    }
}
