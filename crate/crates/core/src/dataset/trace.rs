//! Templated three-stage reasoning traces.
//!
//! The generator sees the ground truth and every candidate's route length to
//! the target, and phrases them as visual evidence. Label letters appear only
//! as the subject of their own sentence in `think`, so each occurs exactly
//! once there.

use serde::{Deserialize, Serialize};

use crate::episode::{format_response, HighLevelDecision};
use crate::waypoints::{GroundTruth, WaypointSet};
use crate::world::{near_radius, wrap_delta, GridWorld, Pose, SceneObject, Vec2};

use super::instruction::{describe, parse_mentions};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub think: String,
    pub think_summary: String,
    pub action: String,
}

impl Trace {
    /// The tagged response a policy would emit.
    pub fn response(&self) -> String {
        let decision = if self.action == "stop" {
            HighLevelDecision::Stop
        } else {
            HighLevelDecision::GoTo(self.action.chars().next().unwrap_or('?'))
        };
        format_response(&self.think, &self.think_summary, decision)
    }
}

/// What the trace generator knows about one decision.
pub struct TraceContext<'a> {
    pub world: &'a GridWorld,
    pub pose: Pose,
    pub set: &'a WaypointSet,
    pub target: &'a SceneObject,
    pub instruction: &'a str,
}

fn direction(pose: Pose, p: Vec2) -> &'static str {
    let rel = wrap_delta((p - pose.pos()).angle() - pose.heading).to_degrees();
    let left = rel > 0.0;
    match (rel.abs(), left) {
        (a, _) if a < 25.0 => "straight ahead",
        (a, true) if a < 70.0 => "ahead on the left",
        (a, false) if a < 70.0 => "ahead on the right",
        (a, true) if a < 120.0 => "to my left",
        (a, false) if a < 120.0 => "to my right",
        (_, true) => "behind me on the left",
        (_, false) => "behind me on the right",
    }
}

fn object_phrase(o: &SceneObject) -> String {
    match o.color() {
        Some(c) => format!("{c} {}", o.category),
        None => o.category.clone(),
    }
}

/// The closest object to `p` within the near radius.
fn landmark(world: &GridWorld, p: Vec2) -> Option<&SceneObject> {
    world
        .objects
        .iter()
        .map(|o| (o, o.anchor.dist(p)))
        .filter(|(_, d)| *d <= near_radius())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(o, _)| o)
}

pub fn synthesize_trace(ctx: &TraceContext<'_>) -> Trace {
    let set = ctx.set;
    let mut target_desc = describe(&parse_mentions(ctx.instruction));
    if target_desc.trim().is_empty() {
        target_desc = ctx.target.category.clone();
    }
    let mut think = format!("Looking for the {target_desc}.");
    for c in &set.candidates {
        let dir = direction(ctx.pose, c.world_pos);
        let dist = c.world_pos.dist(ctx.pose.pos());
        let evidence = match landmark(ctx.world, c.world_pos) {
            Some(o) if o.id == ctx.target.id => {
                format!(
                    "right next to the {} that matches the description",
                    object_phrase(o)
                )
            }
            Some(o) => format!("near the {}", object_phrase(o)),
            None => "in open floor with nothing notable around it".to_string(),
        };
        let route = if Some(c.label) == set.best_label {
            "and the path from there toward the target looks shortest"
        } else if c.goal_distance > set.pose_goal_distance {
            "but it leads away from where the target should be"
        } else {
            "and it brings me somewhat closer"
        };
        think.push_str(&format!(
            " {} is {dir}, about {dist:.1} m away, {evidence}, {route}.",
            c.label
        ));
    }
    match set.gt {
        GroundTruth::Stop => {
            think.push_str(&format!(
                " The {target_desc} is right in front of me, only {:.1} m away, so this is the goal.",
                set.pose_goal_distance
            ));
            Trace {
                think,
                think_summary: format!(
                    "The {} is within reach and matches the description. I will stop here.",
                    object_phrase(ctx.target)
                ),
                action: "stop".into(),
            }
        }
        GroundTruth::Label(l) => {
            let cue = match set.get(l).and_then(|c| landmark(ctx.world, c.world_pos)) {
                Some(o) if o.id == ctx.target.id => {
                    format!("it sits beside the {}", object_phrase(o))
                }
                Some(o) => format!(
                    "it passes the {} on the way to the target",
                    object_phrase(o)
                ),
                None => "it opens the most direct route to the target".to_string(),
            };
            Trace {
                think,
                think_summary: format!(
                    "Waypoint {l} is the best next move because {cue}. I will go there."
                ),
                action: l.to_string(),
            }
        }
        GroundTruth::TurnAround => Trace {
            think,
            think_summary: "Nothing useful is visible ahead. I will turn around.".into(),
            action: "turn_around".into(),
        },
    }
}
