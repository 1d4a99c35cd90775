//! Allocentric top-down map accumulated from panoramic observations.
//!
//! Rendered north-up (`+y` toward the top of the image) and auto-scaled to
//! the world bounds. Colors: unexplored dark gray, explored floor light gray,
//! observed obstacles slate, trajectory blue, agent green.

use super::{PanoramicObservation, RgbImage};
use crate::world::{CellIdx, GridWorld, Pose, Vec2};

pub const TOPDOWN_SIZE: usize = 256;

const BACKGROUND: [u8; 3] = [0, 0, 0];
const UNEXPLORED: [u8; 3] = [38, 38, 38];
const EXPLORED: [u8; 3] = [222, 222, 222];
const OBSTACLE: [u8; 3] = [70, 74, 96];
const TRAJECTORY: [u8; 3] = [30, 110, 230];
const AGENT: [u8; 3] = [20, 170, 60];
const AGENT_HEADING: [u8; 3] = [10, 90, 30];

#[derive(Debug, Clone, PartialEq)]
pub struct TopDownMap {
    pub size: usize,
    width: usize,
    height: usize,
    resolution: f64,
    explored: Vec<bool>,
    obstacle: Vec<bool>,
    /// One vertex per distinct pose the map was updated from.
    pub trajectory: Vec<Vec2>,
    pub agent: Option<Pose>,
    /// Pixels per meter.
    scale: f64,
    offset: (f64, f64),
}

impl TopDownMap {
    pub fn new(world: &GridWorld) -> Self {
        let size = TOPDOWN_SIZE;
        let (wm, hm) = (world.width_m(), world.height_m());
        let scale = size as f64 / wm.max(hm);
        let offset = (
            (size as f64 - wm * scale) / 2.0,
            (size as f64 - hm * scale) / 2.0,
        );
        Self {
            size,
            width: world.width,
            height: world.height,
            resolution: world.resolution,
            explored: vec![false; world.width * world.height],
            obstacle: vec![false; world.width * world.height],
            trajectory: Vec::new(),
            agent: None,
            scale,
            offset,
        }
    }

    fn index_of(&self, p: Vec2) -> Option<usize> {
        let c = (p.x / self.resolution).floor();
        let r = (p.y / self.resolution).floor();
        (c >= 0.0 && r >= 0.0 && (c as usize) < self.width && (r as usize) < self.height)
            .then(|| r as usize * self.width + c as usize)
    }

    fn cell_index(&self, c: CellIdx) -> Option<usize> {
        (c.col >= 0
            && c.row >= 0
            && (c.col as usize) < self.width
            && (c.row as usize) < self.height)
            .then(|| c.row as usize * self.width + c.col as usize)
    }

    pub fn is_explored(&self, c: CellIdx) -> bool {
        self.cell_index(c).is_some_and(|k| self.explored[k])
    }

    pub fn is_obstacle(&self, c: CellIdx) -> bool {
        self.cell_index(c).is_some_and(|k| self.obstacle[k])
    }

    pub fn explored_count(&self) -> usize {
        self.explored.iter().filter(|&&e| e).count()
    }

    pub fn explored_cells(&self) -> Vec<CellIdx> {
        (0..self.explored.len())
            .filter(|&k| self.explored[k])
            .map(|k| CellIdx::new((k % self.width) as i32, (k / self.width) as i32))
            .collect()
    }

    fn to_pixel(&self, p: Vec2) -> (f64, f64) {
        (
            self.offset.0 + p.x * self.scale,
            self.size as f64 - (self.offset.1 + p.y * self.scale),
        )
    }

    pub fn render(&self) -> RgbImage {
        let n = self.size;
        let mut img = RgbImage::new(n, n, BACKGROUND);
        for py in 0..n {
            for px in 0..n {
                let x = (px as f64 + 0.5 - self.offset.0) / self.scale;
                let y = (n as f64 - py as f64 - 0.5 - self.offset.1) / self.scale;
                let Some(k) = self.index_of(Vec2::new(x, y)) else {
                    continue;
                };
                let rgb = if self.obstacle[k] {
                    OBSTACLE
                } else if self.explored[k] {
                    EXPLORED
                } else {
                    UNEXPLORED
                };
                img.put(px, py, rgb);
            }
        }
        let mut pts: Vec<Vec2> = self.trajectory.clone();
        if let Some(a) = self.agent {
            if pts.last() != Some(&a.pos()) {
                pts.push(a.pos());
            }
        }
        for seg in pts.windows(2) {
            draw_line(
                &mut img,
                self.to_pixel(seg[0]),
                self.to_pixel(seg[1]),
                TRAJECTORY,
            );
        }
        if let Some(a) = self.agent {
            let (cx, cy) = self.to_pixel(a.pos());
            for dy in -4i64..=4 {
                for dx in -4i64..=4 {
                    if dx * dx + dy * dy <= 16 {
                        img.put_clipped(cx as i64 + dx, cy as i64 + dy, AGENT);
                    }
                }
            }
            let tip = (cx + 9.0 * a.heading.cos(), cy - 9.0 * a.heading.sin());
            draw_line(&mut img, (cx, cy), tip, AGENT_HEADING);
        }
        img
    }
}

fn draw_line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), rgb: [u8; 3]) {
    let n = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
    for i in 0..=n {
        let t = i as f64 / n as f64;
        let x = a.0 + (b.0 - a.0) * t;
        let y = a.1 + (b.1 - a.1) * t;
        img.put_clipped(x.floor() as i64, y.floor() as i64, rgb);
    }
}

/// Integrate one observation: cells along every column ray up to the first
/// obstacle (or `max_depth`) become explored; the obstacle cell is marked.
pub fn update_topdown(map: &mut TopDownMap, obs: &PanoramicObservation, pose: Pose) {
    let step = map.resolution * 0.1;
    for col in 0..obs.width() {
        let dir = Vec2::from_angle(pose.heading + obs.rig.column_angle(col));
        let range = obs.column_range[col];
        let reach = range.min(obs.max_depth);
        let n = (reach / step).floor() as usize;
        for i in 0..=n {
            // Stay a hair short of the obstacle face.
            let t = (i as f64 * step).min(reach - 1e-6).max(0.0);
            if let Some(k) = map.index_of(pose.pos() + dir * t) {
                map.explored[k] = true;
            }
        }
        if range <= obs.max_depth {
            if let Some(k) = map.index_of(pose.pos() + dir * (range + 1e-6)) {
                map.obstacle[k] = true;
            }
        }
    }
    if map.trajectory.last() != Some(&pose.pos()) {
        map.trajectory.push(pose.pos());
    }
    map.agent = Some(pose);
}
