//! Waypoint candidates: valid floor positions from depth, DBSCAN centroids,
//! random letter labels, the ground-truth choice and the label overlay.

mod dbscan;
mod overlay;

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sensors::{pixel_to_world, world_to_pixel, PanoramicObservation, PixelClass};
use crate::world::{CellIdx, GoalField, GridWorld, Pose, SceneObject, Vec2};

pub use dbscan::{cluster_waypoints, dbscan, Cluster};
pub use overlay::{
    detect_labels, draw_label, overlay_center, DetectedLabel, LABEL_RADIUS, LABEL_RED, LABEL_WHITE,
};

/// Success radius around the target.
pub const STOP_RADIUS: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaypointError {
    #[error("clustering produced no waypoint candidates")]
    NoCandidates,
    #[error("target is unreachable from every candidate")]
    TargetUnreachable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaypointParams {
    pub eps: f64,
    pub min_pts: usize,
    pub k_max: usize,
    /// Pixel stride of the floor subsampling grid.
    pub stride: usize,
    /// Minimum distance from a valid position to any obstacle.
    pub inflation: f64,
    pub max_depth: f64,
    /// Cluster each camera's floor points separately.
    pub per_camera: bool,
    /// Clusters whose centroid lies closer than this to the agent are dropped.
    pub min_separation: f64,
}

impl Default for WaypointParams {
    fn default() -> Self {
        Self {
            eps: 0.5,
            min_pts: 5,
            k_max: 5,
            stride: 4,
            inflation: 0.25,
            max_depth: crate::sensors::DEFAULT_MAX_DEPTH,
            per_camera: true,
            min_separation: 0.5,
        }
    }
}

/// The correct high-level decision at a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroundTruth {
    Label(char),
    Stop,
    /// Only when nothing navigable is visible; never recorded in a corpus.
    TurnAround,
}

impl fmt::Display for GroundTruth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroundTruth::Label(c) => write!(f, "{c}"),
            GroundTruth::Stop => write!(f, "stop"),
            GroundTruth::TurnAround => write!(f, "turn_around"),
        }
    }
}

impl std::str::FromStr for GroundTruth {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            _ if s == "stop" => Ok(GroundTruth::Stop),
            _ if s == "turn_around" => Ok(GroundTruth::TurnAround),
            (Some(c), None) if c.is_ascii_uppercase() => Ok(GroundTruth::Label(c)),
            _ => Err(format!("not a label or stop: {s:?}")),
        }
    }
}

impl Serialize for GroundTruth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GroundTruth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointCandidate {
    pub label: char,
    pub world_pos: Vec2,
    /// `(row, col)` reprojection into the panorama.
    pub pixel_pos: (usize, usize),
    pub cluster_size: usize,
    /// Distance from `world_pos` to the target (privileged).
    pub goal_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointSet {
    /// In cluster-rank order (largest cluster first).
    pub candidates: Vec<WaypointCandidate>,
    pub gt: GroundTruth,
    /// Best candidate by goal distance, also when `gt` is `Stop`.
    pub best_label: Option<char>,
    /// Distance from the current pose to the target.
    pub pose_goal_distance: f64,
    pub seed: u64,
}

impl WaypointSet {
    /// A set with no candidates, for views with nothing navigable.
    pub fn empty(pose_goal_distance: f64, seed: u64) -> Self {
        Self {
            candidates: Vec::new(),
            gt: if pose_goal_distance < STOP_RADIUS {
                GroundTruth::Stop
            } else {
                GroundTruth::TurnAround
            },
            best_label: None,
            pose_goal_distance,
            seed,
        }
    }

    pub fn labels(&self) -> Vec<char> {
        self.candidates.iter().map(|c| c.label).collect()
    }

    pub fn get(&self, label: char) -> Option<&WaypointCandidate> {
        self.candidates.iter().find(|c| c.label == label)
    }

    /// Action-space size: candidates plus Stop.
    pub fn action_space_size(&self) -> usize {
        self.candidates.len() + 1
    }

    /// True when no candidate is closer to the target than the pose.
    pub fn non_improving(&self) -> bool {
        self.candidates
            .iter()
            .all(|c| c.goal_distance >= self.pose_goal_distance)
    }
}

/// Pixel filter shared by [`valid_positions`] and its oracle tests.
pub fn floor_pixel_valid(
    world: &GridWorld,
    obs: &PanoramicObservation,
    pose: Pose,
    row: usize,
    col: usize,
    params: &WaypointParams,
) -> Option<Vec2> {
    if obs.class_at(row, col) != PixelClass::Floor || obs.depth_at(row, col) > params.max_depth {
        return None;
    }
    let p = pixel_to_world(obs, pose, row, col);
    (world.is_free_point(p) && world.clearance(p) >= params.inflation).then_some(p)
}

/// Floor positions seen in the panorama, subsampled on a pixel grid.
pub fn valid_positions(
    world: &GridWorld,
    obs: &PanoramicObservation,
    pose: Pose,
    params: &WaypointParams,
) -> Vec<Vec2> {
    valid_positions_in(world, obs, pose, params, 0..obs.width())
}

/// [`valid_positions`] restricted to a range of panorama columns.
pub fn valid_positions_in(
    world: &GridWorld,
    obs: &PanoramicObservation,
    pose: Pose,
    params: &WaypointParams,
    cols: std::ops::Range<usize>,
) -> Vec<Vec2> {
    let s = params.stride.max(1);
    let mut out = Vec::new();
    for row in (0..obs.height()).step_by(s) {
        for col in cols.clone().step_by(s) {
            if let Some(p) = floor_pixel_valid(world, obs, pose, row, col, params) {
                out.push(p);
            }
        }
    }
    out
}

/// Nearest free cell center whose eight neighbours are all free.
pub fn snap_to_safe_cell(world: &GridWorld, p: Vec2) -> Option<Vec2> {
    let c0 = world.cell_of(p);
    let safe = |c: CellIdx| {
        (-1..=1).all(|dr| (-1..=1).all(|dc| world.is_free(CellIdx::new(c.col + dc, c.row + dr))))
    };
    let max_r = world.width.max(world.height) as i32;
    let mut best: Option<(f64, CellIdx)> = None;
    for radius in 0..=max_r {
        if let Some((d, _)) = best {
            if d < (radius as f64 - 1.0) * world.resolution {
                break;
            }
        }
        for dr in -radius..=radius {
            for dc in -radius..=radius {
                if dr.abs() != radius && dc.abs() != radius {
                    continue;
                }
                let c = CellIdx::new(c0.col + dc, c0.row + dr);
                if !safe(c) {
                    continue;
                }
                let d = world.center(c).dist(p);
                if best.is_none_or(|(bd, bc)| d < bd || (d == bd && c < bc)) {
                    best = Some((d, c));
                }
            }
        }
    }
    best.map(|(_, c)| world.center(c))
}

/// Draw `n` distinct letters from A–Z.
pub fn sample_labels(seed: u64, n: usize) -> Vec<char> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::index::sample(&mut rng, 26, n.min(26))
        .into_iter()
        .map(|i| (b'A' + i as u8) as char)
        .collect()
}

/// Ground-truth candidate: minimum goal distance, then minimum Euclidean
/// distance to the anchor, then alphabetical label.
pub fn select_ground_truth(candidates: &[WaypointCandidate], anchor: Vec2) -> Option<char> {
    candidates
        .iter()
        .min_by(|a, b| {
            a.goal_distance
                .total_cmp(&b.goal_distance)
                .then(
                    a.world_pos
                        .dist(anchor)
                        .total_cmp(&b.world_pos.dist(anchor)),
                )
                .then(a.label.cmp(&b.label))
        })
        .map(|c| c.label)
}

/// Build the labelled candidate set for one decision.
pub fn build_waypoint_set(
    world: &GridWorld,
    pose: Pose,
    obs: &PanoramicObservation,
    target: &SceneObject,
    field: &GoalField,
    seed: u64,
    params: &WaypointParams,
) -> Result<WaypointSet, WaypointError> {
    let cam = obs.rig.cam_width;
    let ranges: Vec<std::ops::Range<usize>> = if params.per_camera {
        (0..obs.width() / cam)
            .map(|k| k * cam..(k + 1) * cam)
            .collect()
    } else {
        std::iter::once(0..obs.width()).collect()
    };
    let mut clusters = Vec::new();
    for cols in ranges {
        let pts = valid_positions_in(world, obs, pose, params, cols);
        clusters.extend(cluster_waypoints(
            &pts,
            params.eps,
            params.min_pts,
            usize::MAX,
        ));
    }
    clusters.sort_by_key(|c| std::cmp::Reverse(c.size));
    clusters.retain(|c| c.centroid.dist(pose.pos()) >= params.min_separation);
    clusters.truncate(params.k_max);
    let mut placed: Vec<(Vec2, (usize, usize), usize, f64)> = Vec::new();
    for cl in clusters {
        let Some(p) = snap_to_safe_cell(world, cl.centroid) else {
            continue;
        };
        if placed.iter().any(|q| q.0 == p) {
            continue;
        }
        let Some(pix) = world_to_pixel(&obs.rig, pose, p) else {
            continue;
        };
        let Some(gd) = field.at(p) else {
            continue;
        };
        placed.push((p, pix, cl.size, gd));
    }
    if placed.is_empty() {
        return Err(WaypointError::NoCandidates);
    }
    let labels = sample_labels(seed, placed.len());
    let candidates: Vec<WaypointCandidate> = placed
        .into_iter()
        .zip(labels)
        .map(|((p, pix, size, gd), label)| WaypointCandidate {
            label,
            world_pos: p,
            pixel_pos: pix,
            cluster_size: size,
            goal_distance: gd,
        })
        .collect();
    let pose_goal_distance = field
        .at(pose.pos())
        .ok_or(WaypointError::TargetUnreachable)?;
    let best_label = select_ground_truth(&candidates, target.anchor);
    let gt = if pose_goal_distance < STOP_RADIUS {
        GroundTruth::Stop
    } else {
        GroundTruth::Label(best_label.expect("non-empty candidates"))
    };
    Ok(WaypointSet {
        candidates,
        gt,
        best_label,
        pose_goal_distance,
        seed,
    })
}

/// Copy of the observation with every candidate label drawn in alphabetical
/// order; depth and segmentation are untouched.
pub fn overlay_labels(obs: &PanoramicObservation, set: &WaypointSet) -> PanoramicObservation {
    let mut out = obs.clone();
    let mut cands: Vec<&WaypointCandidate> = set.candidates.iter().collect();
    cands.sort_by_key(|c| c.label);
    for c in cands {
        let (cx, cy) = overlay_center(&out.color, c.pixel_pos.0, c.pixel_pos.1);
        draw_label(&mut out.color, cx, cy, c.label);
    }
    out
}
