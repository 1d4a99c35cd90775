//! Group-normalized advantages, sequence-level importance ratios and the
//! clipped surrogate with a KL penalty, plus its analytic gradient.

use serde::{Deserialize, Serialize};

use super::toy::{Token, ToyPolicy, ToyPrompt};
use super::LearnError;

/// Guard added to the group standard deviation.
pub const ADVANTAGE_EPS: f64 = 1e-8;

/// `(r_i − mean) / (std + 1e-8)` with the population standard deviation.
pub fn group_advantages(rewards: &[f64]) -> Result<Vec<f64>, LearnError> {
    let g = rewards.len();
    if g < 2 {
        return Err(LearnError::GroupTooSmall(g));
    }
    let mean = rewards.iter().sum::<f64>() / g as f64;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / g as f64;
    let sd = var.sqrt();
    Ok(rewards
        .iter()
        .map(|r| (r - mean) / (sd + ADVANTAGE_EPS))
        .collect())
}

/// `exp(mean_t(logp_new_t − logp_old_t))`: the geometric mean of token ratios.
pub fn sequence_ratio(logp_new: &[f64], logp_old: &[f64]) -> Result<f64, LearnError> {
    if logp_new.len() != logp_old.len() {
        return Err(LearnError::LengthMismatch(logp_new.len(), logp_old.len()));
    }
    if logp_new.is_empty() {
        return Err(LearnError::EmptySequence);
    }
    let d: f64 = logp_new.iter().zip(logp_old).map(|(a, b)| a - b).sum();
    Ok((d / logp_new.len() as f64).exp())
}

/// Where the importance ratio is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioLevel {
    /// One length-normalized ratio per sequence.
    #[default]
    Sequence,
    /// One ratio per token, clipped per token and averaged over the sequence.
    Token,
}

/// Where the KL penalty enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlPlacement {
    /// Subtracted once from the batch objective, as a per-sequence estimate
    /// (sum over the sequence's tokens) averaged over sampled sequences.
    #[default]
    Objective,
    /// Subtracted inside each member's surrogate term as a per-token mean.
    Surrogate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RLConfig {
    pub clip_eps: f64,
    pub beta: f64,
    pub group_size: usize,
    pub learning_rate: f64,
    /// Refresh the reference policy every this many steps; 0 keeps the
    /// initial policy as reference throughout.
    pub ref_refresh: usize,
    pub ratio: RatioLevel,
    pub kl: KlPlacement,
}

impl Default for RLConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            beta: 0.01,
            group_size: 12,
            learning_rate: 0.05,
            ref_refresh: 0,
            ratio: RatioLevel::Sequence,
            kl: KlPlacement::Objective,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub tokens: Vec<Token>,
    /// Per-token log-probabilities under the sampling policy.
    pub logp_old: Vec<f64>,
    pub reward: f64,
}

/// `G` responses sampled for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRollout {
    pub prompt: ToyPrompt,
    pub members: Vec<Member>,
}

impl GroupRollout {
    pub fn rewards(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.reward).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Mean per-sequence KL estimate against the reference.
    pub kl: f64,
    /// Fraction of clipped terms (sequences or tokens, per ratio level).
    pub clip_fraction: f64,
}

fn clip(x: f64, eps: f64) -> f64 {
    x.clamp(1.0 - eps, 1.0 + eps)
}

/// `min(ρA, clip(ρ)A)` and whether the unclipped branch is active.
fn clipped_term(rho: f64, adv: f64, eps: f64) -> (f64, bool) {
    let a = rho * adv;
    let b = clip(rho, eps) * adv;
    if a <= b {
        (a, true)
    } else {
        (b, false)
    }
}

/// Objective and its gradient. Advantages are constants; the KL uses the
/// `exp(q) − q − 1` per-token estimator with `q = logp_ref − logp`.
pub fn gspo_objective(
    policy: &ToyPolicy,
    rollouts: &[GroupRollout],
    cfg: &RLConfig,
    reference: &ToyPolicy,
) -> Result<Objective, LearnError> {
    if rollouts.is_empty() {
        return Err(LearnError::EmptyBatch);
    }
    let n = policy.params.len();
    let mut value = 0.0;
    let mut grad = vec![0.0; n];
    let mut kl_total = 0.0;
    let mut kl_count = 0usize;
    let mut clipped = 0usize;
    let mut terms = 0usize;
    let n_groups = rollouts.len() as f64;

    for group in rollouts {
        let g = group.members.len();
        let adv = group_advantages(&group.rewards())?;
        let w = 1.0 / (n_groups * g as f64);
        for (m, &a) in group.members.iter().zip(&adv) {
            let lp = policy.token_logps(&group.prompt, &m.tokens);
            let lp_ref = reference.token_logps(&group.prompt, &m.tokens);
            if lp.len() != m.logp_old.len() {
                return Err(LearnError::LengthMismatch(lp.len(), m.logp_old.len()));
            }
            if lp.is_empty() {
                return Err(LearnError::EmptySequence);
            }
            if lp
                .iter()
                .chain(&m.logp_old)
                .chain(&lp_ref)
                .any(|v| !v.is_finite())
            {
                return Err(LearnError::NonFiniteLogProb);
            }
            let len = lp.len() as f64;

            match cfg.ratio {
                RatioLevel::Sequence => {
                    let s = sequence_ratio(&lp, &m.logp_old)?;
                    let (t, active) = clipped_term(s, a, cfg.clip_eps);
                    value += w * t;
                    terms += 1;
                    if active {
                        for &tok in &m.tokens {
                            policy.token_grad(&group.prompt, tok, &mut grad, w * a * s / len);
                        }
                    } else {
                        clipped += 1;
                    }
                }
                RatioLevel::Token => {
                    for (k, &tok) in m.tokens.iter().enumerate() {
                        let r = (lp[k] - m.logp_old[k]).exp();
                        let (t, active) = clipped_term(r, a, cfg.clip_eps);
                        value += w * t / len;
                        terms += 1;
                        if active {
                            policy.token_grad(&group.prompt, tok, &mut grad, w * a * r / len);
                        } else {
                            clipped += 1;
                        }
                    }
                }
            }

            // exp(q) − q − 1 and its derivative (1 − exp(q)) ∂logp.
            let mut seq_kl = 0.0;
            for (k, &tok) in m.tokens.iter().enumerate() {
                let q = lp_ref[k] - lp[k];
                seq_kl += q.exp() - q - 1.0;
                let dk = 1.0 - q.exp();
                let scale = match cfg.kl {
                    KlPlacement::Objective => -cfg.beta * w * dk,
                    KlPlacement::Surrogate => -cfg.beta * w * dk / len,
                };
                if cfg.beta != 0.0 {
                    policy.token_grad(&group.prompt, tok, &mut grad, scale);
                }
            }
            value -= cfg.beta
                * w
                * match cfg.kl {
                    KlPlacement::Objective => seq_kl,
                    KlPlacement::Surrogate => seq_kl / len,
                };
            kl_total += seq_kl;
            kl_count += 1;
        }
    }
    Ok(Objective {
        value,
        grad,
        kl: kl_total / kl_count.max(1) as f64,
        clip_fraction: clipped as f64 / terms.max(1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn advantages_examples() {
        let a = group_advantages(&[1.0, 0.0, 0.0, 1.0]).unwrap();
        for (x, y) in a.iter().zip([1.0, -1.0, -1.0, 1.0]) {
            assert!((x - y).abs() < 1e-7);
        }
        assert_eq!(group_advantages(&[0.5; 3]).unwrap(), vec![0.0; 3]);
        assert_eq!(group_advantages(&[1.0]), Err(LearnError::GroupTooSmall(1)));
    }

    #[test]
    fn ratio_examples() {
        let old = [-1.0, -2.0, -0.5];
        assert_eq!(sequence_ratio(&old, &old).unwrap(), 1.0);
        let r = sequence_ratio(&[2f64.ln(), 0.5f64.ln()], &[0.0, 0.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let r = sequence_ratio(&[2f64.ln(); 3], &[0.0; 3]).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
        assert_eq!(
            sequence_ratio(&[0.0], &[0.0, 0.0]),
            Err(LearnError::LengthMismatch(1, 2))
        );
    }

    #[test]
    fn clip_arithmetic() {
        assert!((clipped_term(1.5, 1.0, 0.2).0 - 1.2).abs() < 1e-12);
        assert!((clipped_term(0.5, -1.0, 0.2).0 + 0.8).abs() < 1e-12);
    }
}
