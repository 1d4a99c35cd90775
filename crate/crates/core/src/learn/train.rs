//! GSPO training loop, held-out evaluation and training curves.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gspo::{gspo_objective, GroupRollout, Member, RLConfig};
use super::toy::{sequence_reward, Token, ToyPolicy, ToyPrompt};
use super::{LearnError, RewardWeights};
use crate::episode::{derive_seed, HighLevelDecision};

/// Adam, written as gradient ascent.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// Move `params` along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] += self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub rl: RLConfig,
    pub steps: usize,
    pub prompts_per_step: usize,
    /// Optimizer updates per batch of rollouts (the first sees ratio 1).
    pub inner_updates: usize,
    pub weights: RewardWeights,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rl: RLConfig::default(),
            steps: 300,
            prompts_per_step: 16,
            inner_updates: 2,
            weights: RewardWeights::default(),
            seed: 0,
        }
    }
}

/// One row of the training curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub mean_reward: f64,
    /// Share of sampled responses choosing Stop at stop decisions in the
    /// batch; NaN when the batch holds none.
    pub stop_recall: f64,
    pub kl: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub policy: ToyPolicy,
    pub curve: Vec<CurvePoint>,
}

fn chose_stop(prompt: &ToyPrompt, seq: &[Token]) -> bool {
    seq.iter().any(|t| match *t {
        Token::Action(a) => prompt.actions[a].decision == HighLevelDecision::Stop,
        _ => false,
    })
}

fn rollout(
    policy: &ToyPolicy,
    prompt: &ToyPrompt,
    g: usize,
    seed: u64,
    w: RewardWeights,
) -> GroupRollout {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let members = (0..g)
        .map(|_| {
            let tokens = policy.sample(prompt, &mut rng);
            let logp_old = policy.token_logps(prompt, &tokens);
            let reward = sequence_reward(prompt, &tokens, w);
            Member {
                tokens,
                logp_old,
                reward,
            }
        })
        .collect();
    GroupRollout {
        prompt: prompt.clone(),
        members,
    }
}

/// Optimize `policy` on `dataset`. The policy passed in (typically the
/// supervised warm start) is the KL reference unless `ref_refresh` is set.
pub fn train_gspo(
    policy: &ToyPolicy,
    dataset: &[ToyPrompt],
    cfg: &TrainConfig,
) -> Result<TrainOutcome, LearnError> {
    if dataset.is_empty() {
        return Err(LearnError::EmptyBatch);
    }
    if cfg.rl.group_size < 2 {
        return Err(LearnError::GroupTooSmall(cfg.rl.group_size));
    }
    if !(cfg.rl.clip_eps > 0.0 && cfg.rl.clip_eps < 1.0) || cfg.rl.beta < 0.0 {
        return Err(LearnError::Config(
            "need 0 < clip_eps < 1 and beta >= 0".into(),
        ));
    }
    let mut policy = policy.clone();
    let mut reference = policy.clone();
    let mut opt = Adam::new(policy.params.len(), cfg.rl.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut curve = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        if cfg.rl.ref_refresh > 0 && step > 0 && step % cfg.rl.ref_refresh == 0 {
            reference = policy.clone();
        }
        let picks: Vec<usize> = (0..cfg.prompts_per_step)
            .map(|_| rng.gen_range(0..dataset.len()))
            .collect();
        let old = policy.clone();
        let rollouts: Vec<GroupRollout> = picks
            .par_iter()
            .enumerate()
            .map(|(i, &p)| {
                let seed = derive_seed(cfg.seed, ((step as u64) << 20) | i as u64);
                rollout(&old, &dataset[p], cfg.rl.group_size, seed, cfg.weights)
            })
            .collect();

        let mut kl = 0.0;
        let mut clip_fraction = 0.0;
        for _ in 0..cfg.inner_updates.max(1) {
            let obj = gspo_objective(&policy, &rollouts, &cfg.rl, &reference)?;
            kl = obj.kl;
            clip_fraction = obj.clip_fraction;
            opt.step(&mut policy.params, &obj.grad);
            if !policy.all_finite() {
                return Err(LearnError::Divergence { step });
            }
        }

        let n_members: usize = rollouts.iter().map(|r| r.members.len()).sum();
        let mean_reward = rollouts
            .iter()
            .flat_map(|r| r.members.iter().map(|m| m.reward))
            .sum::<f64>()
            / n_members as f64;
        let (mut stops, mut hits) = (0usize, 0usize);
        for r in rollouts.iter().filter(|r| r.prompt.is_stop()) {
            for m in &r.members {
                stops += 1;
                hits += chose_stop(&r.prompt, &m.tokens) as usize;
            }
        }
        curve.push(CurvePoint {
            step,
            mean_reward,
            stop_recall: if stops > 0 {
                hits as f64 / stops as f64
            } else {
                f64::NAN
            },
            kl,
            clip_fraction,
        });
    }
    Ok(TrainOutcome { policy, curve })
}

/// Held-out metrics: exact expected reward, and greedy-decoding recall and
/// accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyEval {
    pub mean_reward: f64,
    /// Share of stop decisions where the greedy response is Stop; NaN if none.
    pub stop_recall: f64,
    /// Share of all decisions where the greedy response is Stop.
    pub stop_rate: f64,
    pub accuracy: f64,
}

pub fn evaluate_toy(policy: &ToyPolicy, prompts: &[ToyPrompt], weights: RewardWeights) -> ToyEval {
    let n = prompts.len().max(1) as f64;
    let mut reward = 0.0;
    let (mut stops, mut recalled, mut stop_calls, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for p in prompts {
        reward += policy.expected_reward(p, weights);
        let seq = policy.greedy(p);
        let s = chose_stop(p, &seq);
        stop_calls += s as usize;
        if p.is_stop() {
            stops += 1;
            recalled += s as usize;
        }
        correct +=
            (sequence_reward(p, &seq, weights) >= weights.format + weights.action - 1e-12) as usize;
    }
    ToyEval {
        mean_reward: reward / n,
        stop_recall: if stops > 0 {
            recalled as f64 / stops as f64
        } else {
            f64::NAN
        },
        stop_rate: stop_calls as f64 / n,
        accuracy: correct as f64 / n,
    }
}

/// Write the curve as CSV with columns step, mean_reward, stop_recall, kl,
/// clip_fraction.
pub fn write_curve_csv<W: Write>(out: W, curve: &[CurvePoint]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for p in curve {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
