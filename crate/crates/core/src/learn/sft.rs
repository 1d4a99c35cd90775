//! Teacher-forced cross-entropy warm-up.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::toy::{Token, ToyPolicy, ToyPrompt};
use super::train::Adam;
use super::LearnError;

/// Target sequence: all three tags, then the correct action.
pub fn sft_target(prompt: &ToyPrompt) -> Option<Vec<Token>> {
    let a = prompt.gt_index()?;
    Some(vec![
        Token::Tag(0, true),
        Token::Tag(1, true),
        Token::Tag(2, true),
        Token::Action(a),
    ])
}

/// `−(1/N) Σ_n Σ_t log π(r_t | prompt, r_<t)` and its gradient.
pub fn sft_loss(
    policy: &ToyPolicy,
    batch: &[(ToyPrompt, Vec<Token>)],
) -> Result<(f64, Vec<f64>), LearnError> {
    if batch.is_empty() {
        return Err(LearnError::EmptyBatch);
    }
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; policy.params.len()];
    for (prompt, seq) in batch {
        let lp: f64 = policy.token_logps(prompt, seq).iter().sum();
        if !lp.is_finite() {
            return Err(LearnError::NonFiniteLogProb);
        }
        loss -= lp / n;
        for &t in seq {
            policy.token_grad(prompt, t, &mut grad, -1.0 / n);
        }
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SftConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SftConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            batch_size: 32,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

/// Minimize [`sft_loss`] with Adam over shuffled minibatches. Returns the
/// loss per step.
pub fn train_sft(
    policy: &mut ToyPolicy,
    prompts: &[ToyPrompt],
    cfg: &SftConfig,
) -> Result<Vec<f64>, LearnError> {
    let data: Vec<(ToyPrompt, Vec<Token>)> = prompts
        .iter()
        .filter_map(|p| sft_target(p).map(|t| (p.clone(), t)))
        .collect();
    if data.is_empty() {
        return Err(LearnError::EmptyBatch);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(policy.params.len(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut cursor = order.len();
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size.min(data.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(data[order[cursor]].clone());
            cursor += 1;
        }
        let (loss, grad) = sft_loss(policy, &batch)?;
        // Descend: Adam ascends, so flip the gradient.
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        opt.step(&mut policy.params, &neg);
        if !policy.all_finite() {
            return Err(LearnError::Divergence { step });
        }
        losses.push(loss);
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::HighLevelDecision;
    use crate::learn::ToyAction;
    use crate::waypoints::GroundTruth;

    fn prompt(n: usize) -> ToyPrompt {
        ToyPrompt {
            actions: (0..n)
                .map(|i| ToyAction {
                    decision: HighLevelDecision::GoTo((b'A' + i as u8) as char),
                    features: [i as f64 * 0.1, 0.2, 0.3, 0.4, 0.0, 0.0],
                })
                .collect(),
            gt: GroundTruth::Label('B'),
        }
    }

    #[test]
    fn uniform_policy_loss() {
        let p = prompt(5);
        let t = sft_target(&p).unwrap();
        let (loss, _) = sft_loss(&ToyPolicy::uniform(), &[(p, t)]).unwrap();
        assert!((loss - (3.0 * 2f64.ln() + 5f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn confident_policy_near_zero_loss() {
        let p = prompt(3);
        let t = sft_target(&p).unwrap();
        // Huge tag biases and a feature that singles out action B.
        let mut p2 = p;
        p2.actions[1].features[5] = 1.0;
        let pol = ToyPolicy::new(vec![0.0, 0.0, 0.0, 0.0, 0.0, 60.0, 60.0, 60.0, 60.0], 1.0);
        let (loss, _) = sft_loss(&pol, &[(p2, t)]).unwrap();
        assert!(loss < 1e-20);
    }

    #[test]
    fn empty_batch_rejected() {
        assert_eq!(
            sft_loss(&ToyPolicy::uniform(), &[]),
            Err(LearnError::EmptyBatch)
        );
    }
}
