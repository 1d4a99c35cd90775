//! The high-level decision loop: observe, query the policy, parse, act.

mod log;
mod parse;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policies::{Policy, PolicyQuery, Privileged};
use crate::sensors::{render_panorama, update_topdown, TopDownMap};
use crate::waypoints::{
    build_waypoint_set, overlay_labels, WaypointParams, WaypointSet, STOP_RADIUS,
};
use crate::world::{
    apply_action, plan_to_actions, GoalField, GridWorld, LowLevelAction, Pose, SceneObject,
};

pub use log::{read_episode_log, write_episode_log, EPISODE_LOG_VERSION};
pub use parse::{
    extract_tag, format_response, normalize_action, parse_response, tag_presence, ParseError,
    ParsedResponse, TAGS,
};

pub const MAX_LOW_LEVEL_STEPS: usize = 500;
/// Turn Around is 180° of 15° turns.
pub const TURN_AROUND_STEPS: usize = 12;

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("target object {0} does not exist")]
    UnknownTarget(u32),
    #[error("target is unreachable from the start pose")]
    Unreachable,
    #[error("start pose is not in free space")]
    BadStart,
}

/// One of the three high-level choices a policy can make.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HighLevelDecision {
    GoTo(char),
    Stop,
    TurnAround,
}

impl HighLevelDecision {
    /// Wire form: a letter, `stop` or `turn_around`.
    pub fn action_text(&self) -> String {
        match self {
            HighLevelDecision::GoTo(c) => c.to_string(),
            HighLevelDecision::Stop => "stop".into(),
            HighLevelDecision::TurnAround => "turn_around".into(),
        }
    }
}

impl Serialize for HighLevelDecision {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.action_text())
    }
}

impl<'de> Deserialize<'de> for HighLevelDecision {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        normalize_action(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeMode {
    Normal,
    OracleStop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Termination {
    StoppedCorrect,
    StoppedWrong,
    StepBudget,
    PolicyError,
}

/// A navigation task inside a world identified by its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub episode_id: String,
    pub world_seed: u64,
    pub start: Pose,
    pub target_id: u32,
    pub instruction: String,
    pub max_low_level_steps: usize,
    pub success_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunOptions {
    pub waypoints: WaypointParams,
    /// Cap on high-level decisions; exceeding it ends the episode as
    /// `StepBudget` (guards against policies that never move).
    pub max_decisions: usize,
    /// Keep PNG frames of every decision in the result.
    pub keep_frames: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            waypoints: WaypointParams::default(),
            max_decisions: 120,
            keep_frames: false,
        }
    }
}

/// Everything that happened at one decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionLog {
    pub decision_index: usize,
    pub pose: Pose,
    pub set: WaypointSet,
    /// Raw text of the accepted response (or the last failed one).
    pub response: String,
    pub parsed: Option<ParsedResponse>,
    /// Parse failures before acceptance, as messages.
    pub errors: Vec<String>,
    pub low_level_actions: usize,
    pub steps_after: usize,
    pub goal_distance_after: f64,
    #[serde(skip)]
    pub frames: Option<Frames>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frames {
    pub panorama_png: Vec<u8>,
    pub topdown_png: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode_id: String,
    pub seed: u64,
    pub mode: EpisodeMode,
    pub success: bool,
    pub termination: Termination,
    pub low_level_steps: usize,
    pub forward_steps: usize,
    /// Path length actually travelled, meters.
    pub path_length: f64,
    /// Start-to-target geodesic, meters.
    pub shortest_path: f64,
    pub final_pose: Pose,
    pub final_goal_distance: f64,
    pub decisions: Vec<DecisionLog>,
}

impl EpisodeResult {
    pub fn hallucinations(&self) -> usize {
        self.decisions
            .iter()
            .flat_map(|d| &d.errors)
            .filter(|e| e.contains("not among the overlaid labels"))
            .count()
    }
}

/// Seed for an independent random stream derived from a base seed.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Walker<'a> {
    world: &'a GridWorld,
    field: &'a GoalField,
    mode: EpisodeMode,
    max_steps: usize,
    radius: f64,
    pose: Pose,
    steps: usize,
    forward: usize,
    path: f64,
}

enum StepOutcome {
    Continue,
    Budget,
    OracleStopped,
}

impl Walker<'_> {
    fn goal_distance(&self) -> f64 {
        self.field.at(self.pose.pos()).unwrap_or(f64::INFINITY)
    }

    fn step(&mut self, a: LowLevelAction) -> StepOutcome {
        if self.steps >= self.max_steps {
            return StepOutcome::Budget;
        }
        let (p, d) = apply_action(self.world, self.pose, a);
        self.pose = p;
        self.steps += 1;
        if d > 0.0 {
            self.forward += 1;
            self.path += d;
        }
        if self.mode == EpisodeMode::OracleStop && self.goal_distance() < self.radius {
            return StepOutcome::OracleStopped;
        }
        StepOutcome::Continue
    }

    fn run(&mut self, actions: &[LowLevelAction]) -> StepOutcome {
        for &a in actions {
            match self.step(a) {
                StepOutcome::Continue => {}
                other => return other,
            }
        }
        StepOutcome::Continue
    }
}

/// Run one episode. `seed` drives label sampling and the policy's own RNG.
pub fn run_episode(
    world: &GridWorld,
    spec: &EpisodeSpec,
    policy: &mut dyn Policy,
    mode: EpisodeMode,
    seed: u64,
    opts: &RunOptions,
) -> Result<EpisodeResult, EpisodeError> {
    let target: &SceneObject = world
        .object(spec.target_id)
        .ok_or(EpisodeError::UnknownTarget(spec.target_id))?;
    if !world.is_free_point(spec.start.pos()) {
        return Err(EpisodeError::BadStart);
    }
    let field = GoalField::new(world, target);
    let shortest = field
        .at(spec.start.pos())
        .ok_or(EpisodeError::Unreachable)?;
    policy.reset(derive_seed(seed, 0x5eed));

    let mut w = Walker {
        world,
        field: &field,
        mode,
        max_steps: spec.max_low_level_steps,
        radius: spec.success_radius,
        pose: spec.start,
        steps: 0,
        forward: 0,
        path: 0.0,
    };
    let mut map = TopDownMap::new(world);
    let mut decisions = Vec::new();
    let termination = 'episode: {
        for decision_index in 0..opts.max_decisions {
            if w.steps >= w.max_steps {
                break 'episode Termination::StepBudget;
            }
            let pose = w.pose;
            let obs = render_panorama(world, pose, opts.waypoints.max_depth)
                .expect("walker only visits free space");
            update_topdown(&mut map, &obs, pose);
            let label_seed = derive_seed(seed, decision_index as u64 + 1);
            let set = build_waypoint_set(
                world,
                pose,
                &obs,
                target,
                &field,
                label_seed,
                &opts.waypoints,
            )
            .unwrap_or_else(|_| WaypointSet::empty(w.goal_distance(), label_seed));
            let shown = overlay_labels(&obs, &set);
            let query = PolicyQuery {
                instruction: spec.instruction.clone(),
                panorama: shown.color,
                topdown: map.render(),
                stop_allowed: true,
                decision_index,
            };
            let labels = set.labels();
            let mut errors = Vec::new();
            let mut parsed = None;
            let mut response = String::new();
            for _attempt in 0..2 {
                let reply = match policy.as_privileged() {
                    Some(p) => p.respond_privileged(
                        &query,
                        &Privileged {
                            world,
                            set: &set,
                            pose,
                            target,
                            field: &field,
                        },
                    ),
                    None => policy.respond(&query),
                };
                match reply {
                    Ok(text) => {
                        response = text;
                        match parse_response(&response, &labels) {
                            Ok(p) => {
                                parsed = Some(p);
                                break;
                            }
                            Err(e) => errors.push(e.to_string()),
                        }
                    }
                    Err(e) => errors.push(e.to_string()),
                }
            }
            let frames = opts.keep_frames.then(|| Frames {
                panorama_png: query.panorama.to_png(),
                topdown_png: query.topdown.to_png(),
            });
            let mut log = DecisionLog {
                decision_index,
                pose,
                set,
                response,
                parsed: parsed.clone(),
                errors,
                low_level_actions: 0,
                steps_after: w.steps,
                goal_distance_after: w.goal_distance(),
                frames,
            };
            let Some(parsed) = parsed else {
                decisions.push(log);
                break 'episode Termination::PolicyError;
            };
            let steps_before = w.steps;
            let outcome = match parsed.decision {
                HighLevelDecision::Stop => {
                    decisions.push(log);
                    break 'episode if w.goal_distance() < w.radius {
                        Termination::StoppedCorrect
                    } else {
                        Termination::StoppedWrong
                    };
                }
                HighLevelDecision::TurnAround => {
                    w.run(&[LowLevelAction::TurnLeft; TURN_AROUND_STEPS])
                }
                HighLevelDecision::GoTo(l) => {
                    let goal = log.set.get(l).expect("parser validated label").world_pos;
                    match plan_to_actions(world, w.pose, goal) {
                        Ok(actions) => w.run(&actions),
                        Err(e) => {
                            ::log::warn!("planner failed at decision {decision_index}: {e}");
                            StepOutcome::Continue
                        }
                    }
                }
            };
            log.low_level_actions = w.steps - steps_before;
            log.steps_after = w.steps;
            log.goal_distance_after = w.goal_distance();
            decisions.push(log);
            match outcome {
                StepOutcome::Continue => {}
                StepOutcome::Budget => break 'episode Termination::StepBudget,
                StepOutcome::OracleStopped => break 'episode Termination::StoppedCorrect,
            }
        }
        Termination::StepBudget
    };
    let final_goal_distance = w.goal_distance();
    Ok(EpisodeResult {
        episode_id: spec.episode_id.clone(),
        seed,
        mode,
        success: termination == Termination::StoppedCorrect,
        termination,
        low_level_steps: w.steps,
        forward_steps: w.forward,
        path_length: w.path,
        shortest_path: shortest,
        final_pose: w.pose,
        final_goal_distance,
        decisions,
    })
}

/// Convenience constructor with the standard budget and radius.
pub fn episode_spec(
    episode_id: impl Into<String>,
    world_seed: u64,
    start: Pose,
    target_id: u32,
    instruction: impl Into<String>,
) -> EpisodeSpec {
    EpisodeSpec {
        episode_id: episode_id.into(),
        world_seed,
        start,
        target_id,
        instruction: instruction.into(),
        max_low_level_steps: MAX_LOW_LEVEL_STEPS,
        success_radius: STOP_RADIUS,
    }
}
