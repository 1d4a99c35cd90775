//! The policy abstraction, built-in baselines and the external-policy host.
//!
//! Policies see only a [`PolicyQuery`]: the instruction and the two images.
//! Ground truth reaches the oracle through [`PrivilegedPolicy`], a separate
//! evaluation-only entry point the harness calls instead of
//! [`Policy::respond`].

mod external;
mod heuristic;
mod oracle;
mod random;

use thiserror::Error;

use crate::sensors::RgbImage;
use crate::waypoints::WaypointSet;
use crate::world::{GoalField, GridWorld, Pose, SceneObject};

pub use external::{
    ExternalPolicy, Transport, WireQuery, WireResponse, DEFAULT_TIMEOUT, PROTOCOL_VERSION,
};
pub use heuristic::{Evidence, HeuristicConfig, HeuristicPolicy, LabelEvidence};
pub use oracle::OraclePolicy;
pub use random::RandomPolicy;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("policy needs privileged ground truth, which the harness did not provide")]
    MissingPrivileged,
    #[error("policy timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("transport closed")]
    TransportClosed,
    #[error("transport: {0}")]
    Io(#[from] std::io::Error),
    #[error("unknown policy {0:?}")]
    Unknown(String),
}

/// What every policy sees at a decision.
#[derive(Debug, Clone)]
pub struct PolicyQuery {
    pub instruction: String,
    /// 768×256 panorama with labels overlaid.
    pub panorama: RgbImage,
    /// 256×256 top-down map.
    pub topdown: RgbImage,
    pub stop_allowed: bool,
    pub decision_index: usize,
}

/// Ground truth for evaluation-only policies.
pub struct Privileged<'a> {
    pub world: &'a GridWorld,
    pub set: &'a WaypointSet,
    pub pose: Pose,
    pub target: &'a SceneObject,
    pub field: &'a GoalField,
}

pub trait Policy: Send {
    fn name(&self) -> String;

    /// Called at the start of every episode.
    fn reset(&mut self, _seed: u64) {}

    /// Raw tagged response text for one query.
    fn respond(&mut self, query: &PolicyQuery) -> Result<String, PolicyError>;

    /// Whether independent instances may be queried from several threads.
    fn concurrent_safe(&self) -> bool {
        true
    }

    fn as_privileged(&mut self) -> Option<&mut dyn PrivilegedPolicy> {
        None
    }
}

pub trait PrivilegedPolicy {
    fn respond_privileged(
        &mut self,
        query: &PolicyQuery,
        info: &Privileged<'_>,
    ) -> Result<String, PolicyError>;
}

/// Construct a built-in policy by name: `oracle`, `random`, `heuristic`.
pub fn builtin(name: &str) -> Result<Box<dyn Policy>, PolicyError> {
    match name {
        "oracle" => Ok(Box::new(OraclePolicy::new())),
        "random" => Ok(Box::new(RandomPolicy::new(0))),
        "heuristic" => Ok(Box::new(HeuristicPolicy::new(HeuristicConfig::default()))),
        other => Err(PolicyError::Unknown(other.to_string())),
    }
}

pub const BUILTIN_POLICIES: [&str; 3] = ["oracle", "random", "heuristic"];
