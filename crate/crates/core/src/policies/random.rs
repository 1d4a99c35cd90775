//! Uniform baseline over visible labels, Stop and Turn Around.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Policy, PolicyError, PolicyQuery};
use crate::episode::{format_response, HighLevelDecision};
use crate::waypoints::detect_labels;

#[derive(Debug)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> String {
        "random".into()
    }

    fn reset(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn respond(&mut self, query: &PolicyQuery) -> Result<String, PolicyError> {
        let labels: Vec<char> = detect_labels(&query.panorama)
            .iter()
            .map(|d| d.letter)
            .collect();
        let k = self.rng.gen_range(0..labels.len() + 2);
        let d = match k {
            k if k < labels.len() => HighLevelDecision::GoTo(labels[k]),
            k if k == labels.len() => HighLevelDecision::Stop,
            _ => HighLevelDecision::TurnAround,
        };
        Ok(format_response(
            "choosing uniformly at random.",
            "random choice.",
            d,
        ))
    }
}
