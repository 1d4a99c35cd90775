//! Upper-bound policy reading the ground-truth candidate.

use super::{Policy, PolicyError, PolicyQuery, Privileged, PrivilegedPolicy};
use crate::episode::{format_response, HighLevelDecision};
use crate::waypoints::STOP_RADIUS;

/// Stops inside the success radius, otherwise goes to the ground-truth
/// candidate. When no candidate gets closer than the current pose it turns
/// around first (never twice in a row).
#[derive(Debug, Default)]
pub struct OraclePolicy {
    last: Option<HighLevelDecision>,
}

impl OraclePolicy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn decide(&mut self, info: &Privileged<'_>) -> HighLevelDecision {
        let set = info.set;
        let d = if set.pose_goal_distance < STOP_RADIUS {
            HighLevelDecision::Stop
        } else {
            match set.best_label {
                None => HighLevelDecision::TurnAround,
                Some(l) => {
                    let turned = self.last == Some(HighLevelDecision::TurnAround);
                    if set.non_improving() && !turned {
                        HighLevelDecision::TurnAround
                    } else {
                        HighLevelDecision::GoTo(l)
                    }
                }
            }
        };
        self.last = Some(d);
        d
    }
}

impl Policy for OraclePolicy {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn reset(&mut self, _seed: u64) {
        self.last = None;
    }

    fn respond(&mut self, _query: &PolicyQuery) -> Result<String, PolicyError> {
        Err(PolicyError::MissingPrivileged)
    }

    fn as_privileged(&mut self) -> Option<&mut dyn PrivilegedPolicy> {
        Some(self)
    }
}

impl PrivilegedPolicy for OraclePolicy {
    fn respond_privileged(
        &mut self,
        _query: &PolicyQuery,
        info: &Privileged<'_>,
    ) -> Result<String, PolicyError> {
        let d = self.decide(info);
        let summary = match d {
            HighLevelDecision::Stop => format!(
                "the target is {:.2} m away, inside the success radius.",
                info.set.pose_goal_distance
            ),
            HighLevelDecision::GoTo(l) => format!("label {l} is closest to the target."),
            HighLevelDecision::TurnAround => "no visible label gets closer to the target.".into(),
        };
        Ok(format_response("privileged ground truth.", &summary, d))
    }
}
