//! Shortest-path follower: A* over free cells plus a greedy heading
//! controller emitting the fixed low-level action set.

use std::f64::consts::PI;

use super::geodesic::astar;
use super::{wrap_delta, GridWorld, LowLevelAction, Pose, Vec2, WorldError};

pub const FORWARD_STEP: f64 = 0.25;
pub const TURN_STEP: f64 = PI / 12.0;
/// Half a turn increment; within this heading error the controller moves.
const HEADING_TOL: f64 = PI / 24.0;
const ARRIVAL: f64 = 0.25;
const LOOKAHEAD: usize = 8;
/// Surcharge (in cells) for path cells touching an obstacle; keeps the
/// follower off walls where the map allows it.
const WALL_PENALTY: f64 = 0.6;
const LOS_MARGIN: f64 = 0.06;

/// Apply one low-level action. A blocked forward move leaves the pose
/// unchanged. Returns the new pose and the distance travelled.
pub fn apply_action(world: &GridWorld, pose: Pose, action: LowLevelAction) -> (Pose, f64) {
    match action {
        LowLevelAction::Forward => {
            let next = pose.pos() + Vec2::from_angle(pose.heading) * FORWARD_STEP;
            if world.segment_clear(pose.pos(), next, 0.0) {
                (Pose::new(next.x, next.y, pose.heading), FORWARD_STEP)
            } else {
                (pose, 0.0)
            }
        }
        LowLevelAction::TurnLeft => (Pose::new(pose.x, pose.y, pose.heading + TURN_STEP), 0.0),
        LowLevelAction::TurnRight => (Pose::new(pose.x, pose.y, pose.heading - TURN_STEP), 0.0),
        LowLevelAction::Stop => (pose, 0.0),
    }
}

/// Replay a sequence of actions, returning the final pose and path length.
pub fn simulate(world: &GridWorld, start: Pose, actions: &[LowLevelAction]) -> (Pose, f64) {
    actions.iter().fold((start, 0.0), |(p, len), &a| {
        let (np, d) = apply_action(world, p, a);
        (np, len + d)
    })
}

fn turn_towards(err: f64) -> LowLevelAction {
    if err > 0.0 {
        LowLevelAction::TurnLeft
    } else {
        LowLevelAction::TurnRight
    }
}

/// Plan low-level actions that bring the agent within 0.25 m of `to`.
///
/// Follows an A* path with a line-of-sight lookahead: the controller turns
/// in 15° increments until the heading error is below 7.5°, then steps
/// forward. No `Stop` is emitted and no forward step is ever blocked.
pub fn plan_to_actions(
    world: &GridWorld,
    from: Pose,
    to: Vec2,
) -> Result<Vec<LowLevelAction>, WorldError> {
    let unreachable = || WorldError::Unreachable {
        from: from.pos(),
        to,
    };
    if !world.is_free_point(to) || !world.is_free_point(from.pos()) {
        return Err(unreachable());
    }
    let (cells, _, _) = astar(
        world,
        world.cell_of(from.pos()),
        world.cell_of(to),
        WALL_PENALTY,
    )
    .ok_or_else(unreachable)?;
    let mut pts: Vec<Vec2> = cells.iter().map(|&c| world.center(c)).collect();
    *pts.last_mut().unwrap() = to;

    let mut pose = from;
    let mut actions = Vec::new();
    let mut progress = 0usize;
    let budget = 6 * pts.len() + 100;
    for _ in 0..budget {
        let pos = pose.pos();
        let dist = pos.dist(to);
        if dist <= FORWARD_STEP / 2.0 {
            return Ok(actions);
        }

        let window_end = (progress + LOOKAHEAD).min(pts.len() - 1);
        progress = (progress..=window_end)
            .min_by(|&a, &b| pts[a].dist(pos).total_cmp(&pts[b].dist(pos)))
            .unwrap_or(progress);
        let window_end = (progress + LOOKAHEAD).min(pts.len() - 1);
        let lookahead = (progress + 1..=window_end)
            .rev()
            .find(|&j| world.segment_clear(pos, pts[j], LOS_MARGIN))
            .unwrap_or((progress + 1).min(pts.len() - 1));

        let mut target = pts[lookahead];
        let mut err = wrap_delta((target - pos).angle() - pose.heading);
        if dist <= ARRIVAL {
            // Close enough already; only take a final step if it is free.
            let aligned = wrap_delta((to - pos).angle() - pose.heading).abs() <= HEADING_TOL;
            let next = pos + Vec2::from_angle(pose.heading) * FORWARD_STEP;
            if aligned && world.segment_clear(pos, next, 0.0) && next.dist(to) < dist {
                actions.push(LowLevelAction::Forward);
            }
            return Ok(actions);
        }
        if err.abs() <= HEADING_TOL {
            let next = pos + Vec2::from_angle(pose.heading) * FORWARD_STEP;
            if !world.segment_clear(pos, next, 0.0) {
                // Aim at the next cell center instead.
                target = pts[(progress + 1).min(pts.len() - 1)];
                err = wrap_delta((target - pos).angle() - pose.heading);
                if err.abs() <= HEADING_TOL {
                    return Err(WorldError::Unreachable { from: pos, to });
                }
            }
        }
        let action = if err.abs() > HEADING_TOL {
            turn_towards(err)
        } else {
            LowLevelAction::Forward
        };
        actions.push(action);
        pose = apply_action(world, pose, action).0;
    }
    Err(unreachable())
}
