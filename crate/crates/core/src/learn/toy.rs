//! The toy sequence policy.
//!
//! Parameters are `[w_0..w_5, b_think, b_summary, b_action]`. Tag token `k`
//! is emitted with probability `σ(b_k)`; the action token, present only when
//! the action tag is emitted, is drawn from `softmax(w·φ_a / T)` over the
//! prompt's actions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::episode::HighLevelDecision;
use crate::waypoints::GroundTruth;

use super::{compute_reward, RewardWeights};

/// `[pixel x, open space, keyword match, goal closeness, stop evidence, is stop]`.
pub const N_FEATURES: usize = 6;
pub const N_PARAMS: usize = N_FEATURES + 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyAction {
    pub decision: HighLevelDecision,
    pub features: [f64; N_FEATURES],
}

/// One decision as the toy policy sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPrompt {
    pub actions: Vec<ToyAction>,
    pub gt: GroundTruth,
}

impl ToyPrompt {
    pub fn labels(&self) -> Vec<char> {
        self.actions
            .iter()
            .filter_map(|a| match a.decision {
                HighLevelDecision::GoTo(c) => Some(c),
                _ => None,
            })
            .collect()
    }

    pub fn is_stop(&self) -> bool {
        self.gt == GroundTruth::Stop
    }

    /// Index of the correct action, if it is among the actions.
    pub fn gt_index(&self) -> Option<usize> {
        self.actions
            .iter()
            .position(|a| match (a.decision, self.gt) {
                (HighLevelDecision::GoTo(x), GroundTruth::Label(y)) => x == y,
                (HighLevelDecision::Stop, GroundTruth::Stop) => true,
                (HighLevelDecision::TurnAround, GroundTruth::TurnAround) => true,
                _ => false,
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Token {
    /// Tag `k` (think, think_summary, action) emitted or skipped.
    Tag(usize, bool),
    /// Index into the prompt's actions.
    Action(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicy {
    pub params: Vec<f64>,
    pub temperature: f64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)`, stable for large |x|.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

impl ToyPolicy {
    pub fn new(params: Vec<f64>, temperature: f64) -> Self {
        assert_eq!(params.len(), N_PARAMS);
        Self {
            params,
            temperature,
        }
    }

    /// All-zero weights: uniform actions, tags at probability 1/2.
    pub fn uniform() -> Self {
        Self::new(vec![0.0; N_PARAMS], 1.0)
    }

    pub fn weights(&self) -> &[f64] {
        &self.params[..N_FEATURES]
    }

    pub fn tag_prob(&self, k: usize) -> f64 {
        sigmoid(self.params[N_FEATURES + k])
    }

    fn logits(&self, prompt: &ToyPrompt) -> Vec<f64> {
        prompt
            .actions
            .iter()
            .map(|a| {
                a.features
                    .iter()
                    .zip(self.weights())
                    .map(|(f, w)| f * w)
                    .sum::<f64>()
                    / self.temperature
            })
            .collect()
    }

    /// Softmax over the prompt's actions.
    pub fn action_probs(&self, prompt: &ToyPrompt) -> Vec<f64> {
        let z = self.logits(prompt);
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    /// Per-token log-probabilities of a sequence.
    pub fn token_logps(&self, prompt: &ToyPrompt, seq: &[Token]) -> Vec<f64> {
        seq.iter()
            .map(|t| match *t {
                Token::Tag(k, on) => {
                    let b = self.params[N_FEATURES + k];
                    if on {
                        log_sigmoid(b)
                    } else {
                        log_sigmoid(-b)
                    }
                }
                Token::Action(a) => {
                    let z = self.logits(prompt);
                    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                    z[a] - lse
                }
            })
            .collect()
    }

    /// Gradient of one token's log-probability with respect to the parameters.
    pub fn token_grad(&self, prompt: &ToyPrompt, token: Token, out: &mut [f64], scale: f64) {
        match token {
            Token::Tag(k, on) => {
                let p = self.tag_prob(k);
                out[N_FEATURES + k] += scale * if on { 1.0 - p } else { -p };
            }
            Token::Action(a) => {
                let probs = self.action_probs(prompt);
                #[allow(clippy::needless_range_loop)]
                for j in 0..N_FEATURES {
                    let mean: f64 = probs
                        .iter()
                        .zip(&prompt.actions)
                        .map(|(p, act)| p * act.features[j])
                        .sum();
                    out[j] += scale * (prompt.actions[a].features[j] - mean) / self.temperature;
                }
            }
        }
    }

    pub fn sample<R: Rng>(&self, prompt: &ToyPrompt, rng: &mut R) -> Vec<Token> {
        let mut seq = Vec::with_capacity(4);
        let mut action_tag = false;
        for k in 0..3 {
            let on = rng.gen::<f64>() < self.tag_prob(k);
            seq.push(Token::Tag(k, on));
            action_tag = on;
        }
        if action_tag {
            let probs = self.action_probs(prompt);
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut pick = probs.len() - 1;
            for (i, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            seq.push(Token::Action(pick));
        }
        seq
    }

    /// Most likely sequence.
    pub fn greedy(&self, prompt: &ToyPrompt) -> Vec<Token> {
        let mut seq: Vec<Token> = (0..3)
            .map(|k| Token::Tag(k, self.tag_prob(k) >= 0.5))
            .collect();
        if self.tag_prob(2) >= 0.5 {
            let probs = self.action_probs(prompt);
            let best = (0..probs.len())
                .max_by(|&a, &b| probs[a].total_cmp(&probs[b]))
                .unwrap_or(0);
            seq.push(Token::Action(best));
        }
        seq
    }

    /// Exact expected total reward over the sequence distribution.
    pub fn expected_reward(&self, prompt: &ToyPrompt, weights: RewardWeights) -> f64 {
        let p: Vec<f64> = (0..3).map(|k| self.tag_prob(k)).collect();
        let format = p[0] * p[1] * p[2];
        // The action reward also needs the think tags, since an unparseable
        // response earns nothing.
        let correct = prompt
            .gt_index()
            .map_or(0.0, |i| self.action_probs(prompt)[i]);
        weights.format * format + weights.action * format * correct
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

/// Text rendering of a sampled sequence.
pub fn render(prompt: &ToyPrompt, seq: &[Token]) -> String {
    let mut out = String::new();
    let mut action = None;
    for t in seq {
        if let Token::Action(a) = t {
            action = Some(prompt.actions[*a].decision);
        }
    }
    for t in seq {
        match *t {
            Token::Tag(0, true) => {
                let letters: Vec<String> = prompt.labels().iter().map(|c| c.to_string()).collect();
                out.push_str(&format!(
                    "<think>labels {} are visible.</think>",
                    letters.join(", ")
                ));
            }
            Token::Tag(1, true) => {
                out.push_str("<think_summary>choosing by the cues.</think_summary>")
            }
            Token::Tag(2, true) => {
                let text = action.map_or(String::new(), |d| d.action_text());
                out.push_str(&format!("<action>{text}</action>"));
            }
            _ => {}
        }
    }
    out
}

/// Reward of one sampled sequence, scored on its rendered text.
pub fn sequence_reward(prompt: &ToyPrompt, seq: &[Token], weights: RewardWeights) -> f64 {
    compute_reward(&render(prompt, seq), prompt.gt, &prompt.labels(), weights).total
}
