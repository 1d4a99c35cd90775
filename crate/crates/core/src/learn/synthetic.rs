//! Synthetic decisions for the toy policy.
//!
//! Every decision offers 2–6 labels plus Stop. The correct label carries high
//! keyword and goal-closeness features; the others low ones. At a stop
//! decision one label looks just like a correct label (the target is right
//! there), so only the stop-evidence feature of the Stop action tells the
//! two cases apart. Stop evidence is centred at 1 for stop decisions and 0
//! otherwise, with Gaussian noise `stop_noise`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::toy::{ToyAction, ToyPrompt};
use crate::episode::HighLevelDecision;
use crate::waypoints::{sample_labels, GroundTruth};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n: usize,
    /// Exact fraction of stop decisions (rounded to a count).
    pub stop_fraction: f64,
    pub stop_noise: f64,
    /// Gaussian noise on the label cue features.
    pub label_noise: f64,
    pub min_labels: usize,
    pub max_labels: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            stop_fraction: 1698.0 / 36170.0,
            stop_noise: 2.0 / 3.0,
            label_noise: 0.0,
            min_labels: 2,
            max_labels: 6,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    /// Noise-free variant of the same distribution.
    pub fn separable(&self) -> Self {
        Self {
            stop_noise: 0.0,
            label_noise: 0.0,
            ..self.clone()
        }
    }
}

pub fn synthetic_prompts(cfg: &SyntheticConfig) -> Vec<ToyPrompt> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_stop = (cfg.n as f64 * cfg.stop_fraction).round() as usize;
    let mut is_stop: Vec<bool> = (0..cfg.n).map(|i| i < n_stop).collect();
    is_stop.shuffle(&mut rng);
    let label_noise = Normal::new(0.0, cfg.label_noise.max(0.0)).unwrap();
    let stop_noise = Normal::new(0.0, cfg.stop_noise.max(0.0)).unwrap();

    is_stop
        .into_iter()
        .map(|stop| {
            let k = rng.gen_range(cfg.min_labels..=cfg.max_labels.max(cfg.min_labels));
            let letters = sample_labels(rng.gen(), k);
            let cue_idx = rng.gen_range(0..k);
            let mut actions: Vec<ToyAction> = letters
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    let (lo, hi) = if i == cue_idx { (0.6, 1.0) } else { (0.0, 0.5) };
                    let kw: f64 = rng.gen_range(lo..hi) + label_noise.sample(&mut rng);
                    let goal: f64 = rng.gen_range(lo..hi) + label_noise.sample(&mut rng);
                    ToyAction {
                        decision: HighLevelDecision::GoTo(c),
                        features: [rng.gen(), rng.gen(), kw, goal, 0.0, 0.0],
                    }
                })
                .collect();
            let ev = if stop { 1.0 } else { 0.0 } + stop_noise.sample(&mut rng);
            actions.push(ToyAction {
                decision: HighLevelDecision::Stop,
                features: [0.0, 0.0, 0.0, 0.0, ev, 1.0],
            });
            let gt = if stop {
                GroundTruth::Stop
            } else {
                GroundTruth::Label(letters[cue_idx])
            };
            ToyPrompt { actions, gt }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stop_fraction_exact_and_deterministic() {
        let cfg = SyntheticConfig {
            n: 200,
            stop_fraction: 0.25,
            ..Default::default()
        };
        let a = synthetic_prompts(&cfg);
        assert_eq!(a.iter().filter(|p| p.is_stop()).count(), 50);
        assert_eq!(a, synthetic_prompts(&cfg));
        for p in &a {
            assert!(p.gt_index().is_some());
            assert!((3..=7).contains(&p.actions.len()));
        }
    }
}
