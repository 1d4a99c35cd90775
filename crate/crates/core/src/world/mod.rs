//! Procedural 2.5D environments.
//!
//! A [`GridWorld`] is an occupancy grid of square cells (default 0.25 m)
//! partitioned into axis-aligned rooms joined by door gaps, with attributed
//! objects standing on the floor. Objects occupy obstacle cells so the
//! raycaster sees them; each object is attributable through a unique render
//! color.
//!
//! World frame: `x` grows with the column index, `y` with the row index,
//! headings are counter-clockwise from `+x`.

mod generate;
mod geodesic;
mod planner;
mod semantics;
mod serial;

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{full_mentions, generate_world, WorldConfig};
pub use geodesic::{geodesic_distance, CellPath, GoalField, DIAGONAL_COST};
pub use planner::{apply_action, plan_to_actions, simulate, FORWARD_STEP, TURN_STEP};
pub use semantics::{
    near_radius, object_satisfies, Mention, Mentions, Vocabulary, CATEGORIES, COLORS, FEATURES,
    MATERIALS, ROOM_NAMES,
};
pub use serial::WORLD_FORMAT_VERSION;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("invalid world config: {0}")]
    InvalidConfig(String),
    #[error("world generation failed after {attempts} attempts: {reason}")]
    GenerationFailed { attempts: usize, reason: String },
    #[error("no free path between {from:?} and {to:?}")]
    Unreachable { from: Vec2, to: Vec2 },
    #[error("position {0:?} is outside the grid")]
    OutOfBounds(Vec2),
    #[error("world document: {0}")]
    Format(String),
}

/// A position in world meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dist(self, other: Vec2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

/// Wrap an angle into `[0, 2π)`.
pub fn wrap_heading(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Wrap an angle difference into `(-π, π]`.
pub fn wrap_delta(theta: f64) -> f64 {
    let t = (theta + PI).rem_euclid(TAU) - PI;
    if t <= -PI {
        t + TAU
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Radians in `[0, 2π)`.
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: wrap_heading(heading),
        }
    }

    pub fn pos(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// Low-level agent actions with fixed magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LowLevelAction {
    /// Move 0.25 m along the heading.
    Forward,
    /// Rotate 15° counter-clockwise.
    TurnLeft,
    /// Rotate 15° clockwise.
    TurnRight,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Free,
    Obstacle,
}

/// Integer cell coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIdx {
    pub col: i32,
    pub row: i32,
}

impl CellIdx {
    pub const fn new(col: i32, row: i32) -> Self {
        Self { col, row }
    }
}

/// Half-open cell rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRect {
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
}

impl CellRect {
    pub fn new(x0: i32, y0: i32, x1: i32, y1: i32) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn contains(&self, c: CellIdx) -> bool {
        c.col >= self.x0 && c.col < self.x1 && c.row >= self.y0 && c.row < self.y1
    }

    pub fn width(&self) -> i32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> i32 {
        self.y1 - self.y0
    }

    pub fn cells(&self) -> impl Iterator<Item = CellIdx> + '_ {
        (self.y0..self.y1).flat_map(move |r| (self.x0..self.x1).map(move |c| CellIdx::new(c, r)))
    }

    pub fn expand(&self, m: i32) -> CellRect {
        CellRect::new(self.x0 - m, self.y0 - m, self.x1 + m, self.y1 + m)
    }

    pub fn intersects(&self, o: &CellRect) -> bool {
        self.x0 < o.x1 && o.x0 < self.x1 && self.y0 < o.y1 && o.y0 < self.y1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    /// Interior cells of the room (walls excluded).
    pub rect: CellRect,
    pub name: String,
}

/// Intrinsic attribute tags.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Attribute {
    Color(String),
    Material(String),
    /// Something standing on top of the object, e.g. `mirror`.
    OnTop(String),
}

/// Extrinsic relations, referencing other objects by id and rooms by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Relation {
    Near(u32),
    InRoom(usize),
    LeftOf(u32),
    RightOf(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: u32,
    pub category: String,
    pub anchor: Vec2,
    pub footprint: CellRect,
    /// Meters above the floor.
    pub height: f64,
    pub intrinsic: Vec<Attribute>,
    pub extrinsic: Vec<Relation>,
    pub render_color: [u8; 3],
}

impl SceneObject {
    pub fn color(&self) -> Option<&str> {
        self.intrinsic.iter().find_map(|a| match a {
            Attribute::Color(c) => Some(c.as_str()),
            _ => None,
        })
    }

    pub fn material(&self) -> Option<&str> {
        self.intrinsic.iter().find_map(|a| match a {
            Attribute::Material(m) => Some(m.as_str()),
            _ => None,
        })
    }

    pub fn on_top(&self) -> Option<&str> {
        self.intrinsic.iter().find_map(|a| match a {
            Attribute::OnTop(m) => Some(m.as_str()),
            _ => None,
        })
    }

    pub fn room(&self) -> Option<usize> {
        self.extrinsic.iter().find_map(|r| match r {
            Relation::InRoom(i) => Some(*i),
            _ => None,
        })
    }
}

/// Occupancy grid with rooms and objects. Immutable after generation.
#[derive(Debug, Clone)]
pub struct GridWorld {
    pub width: usize,
    pub height: usize,
    /// Meters per cell.
    pub resolution: f64,
    pub cells: Vec<Cell>,
    pub rooms: Vec<Room>,
    pub objects: Vec<SceneObject>,
    pub seed: u64,
    pub config: WorldConfig,
    /// Object index occupying each cell, `u32::MAX` for free cells and walls.
    occupant: Vec<u32>,
}

pub const NO_OCCUPANT: u32 = u32::MAX;

impl PartialEq for GridWorld {
    fn eq(&self, o: &Self) -> bool {
        self.width == o.width
            && self.height == o.height
            && self.resolution == o.resolution
            && self.cells == o.cells
            && self.rooms == o.rooms
            && self.objects == o.objects
            && self.seed == o.seed
            && self.config == o.config
    }
}

impl GridWorld {
    /// Assemble a world from parts, rebuilding the occupancy index.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        width: usize,
        height: usize,
        resolution: f64,
        cells: Vec<Cell>,
        rooms: Vec<Room>,
        objects: Vec<SceneObject>,
        seed: u64,
        config: WorldConfig,
    ) -> Self {
        let mut w = GridWorld {
            width,
            height,
            resolution,
            cells,
            rooms,
            objects,
            seed,
            config,
            occupant: Vec::new(),
        };
        w.rebuild_occupancy();
        w
    }

    /// A world with free interior and a one-cell obstacle border, no rooms or
    /// objects. Handy for tests and examples.
    pub fn open_room(width: usize, height: usize, resolution: f64) -> Self {
        let mut cells = vec![Cell::Free; width * height];
        for r in 0..height {
            for c in 0..width {
                if r == 0 || c == 0 || r == height - 1 || c == width - 1 {
                    cells[r * width + c] = Cell::Obstacle;
                }
            }
        }
        let room = Room {
            rect: CellRect::new(1, 1, width as i32 - 1, height as i32 - 1),
            name: "room".into(),
        };
        GridWorld::from_parts(
            width,
            height,
            resolution,
            cells,
            vec![room],
            Vec::new(),
            0,
            WorldConfig::default(),
        )
    }

    pub(crate) fn rebuild_occupancy(&mut self) {
        let mut occ = vec![NO_OCCUPANT; self.width * self.height];
        for (i, o) in self.objects.iter().enumerate() {
            for c in o.footprint.cells() {
                if let Some(k) = self.index(c) {
                    occ[k] = i as u32;
                }
            }
        }
        self.occupant = occ;
    }

    pub fn in_bounds(&self, c: CellIdx) -> bool {
        c.col >= 0 && c.row >= 0 && (c.col as usize) < self.width && (c.row as usize) < self.height
    }

    pub fn index(&self, c: CellIdx) -> Option<usize> {
        self.in_bounds(c)
            .then(|| c.row as usize * self.width + c.col as usize)
    }

    pub fn cell(&self, c: CellIdx) -> Cell {
        self.index(c).map_or(Cell::Obstacle, |k| self.cells[k])
    }

    pub fn is_free(&self, c: CellIdx) -> bool {
        self.cell(c) == Cell::Free
    }

    pub fn set_cell(&mut self, c: CellIdx, v: Cell) {
        if let Some(k) = self.index(c) {
            self.cells[k] = v;
        }
    }

    /// Index into `objects` of the object occupying a cell.
    pub fn occupant(&self, c: CellIdx) -> Option<usize> {
        self.index(c)
            .map(|k| self.occupant[k])
            .filter(|&o| o != NO_OCCUPANT)
            .map(|o| o as usize)
    }

    pub fn cell_of(&self, p: Vec2) -> CellIdx {
        CellIdx::new(
            (p.x / self.resolution).floor() as i32,
            (p.y / self.resolution).floor() as i32,
        )
    }

    pub fn center(&self, c: CellIdx) -> Vec2 {
        Vec2::new(
            (c.col as f64 + 0.5) * self.resolution,
            (c.row as f64 + 0.5) * self.resolution,
        )
    }

    pub fn width_m(&self) -> f64 {
        self.width as f64 * self.resolution
    }

    pub fn height_m(&self) -> f64 {
        self.height as f64 * self.resolution
    }

    pub fn contains_point(&self, p: Vec2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width_m() && p.y < self.height_m()
    }

    pub fn is_free_point(&self, p: Vec2) -> bool {
        self.contains_point(p) && self.is_free(self.cell_of(p))
    }

    pub fn free_cells(&self) -> impl Iterator<Item = CellIdx> + '_ {
        (0..self.height as i32).flat_map(move |r| {
            (0..self.width as i32)
                .map(move |c| CellIdx::new(c, r))
                .filter(move |&c| self.is_free(c))
        })
    }

    pub fn free_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c == Cell::Free).count()
    }

    /// Distance from a point to the closest obstacle cell square among the
    /// 5×5 block around it (enough for clearances up to one resolution).
    pub fn clearance(&self, p: Vec2) -> f64 {
        let c = self.cell_of(p);
        let mut best = f64::INFINITY;
        for dr in -2..=2 {
            for dc in -2..=2 {
                let n = CellIdx::new(c.col + dc, c.row + dr);
                if self.is_free(n) {
                    continue;
                }
                let x0 = n.col as f64 * self.resolution;
                let y0 = n.row as f64 * self.resolution;
                let dx = (x0 - p.x).max(0.0).max(p.x - (x0 + self.resolution));
                let dy = (y0 - p.y).max(0.0).max(p.y - (y0 + self.resolution));
                best = best.min(dx.hypot(dy));
            }
        }
        best
    }

    /// Index of the room whose interior contains the point.
    pub fn room_at(&self, p: Vec2) -> Option<usize> {
        let c = self.cell_of(p);
        self.rooms.iter().position(|r| r.rect.contains(c))
    }

    /// Nearest free cell (by center distance) to an arbitrary point.
    pub fn nearest_free_cell(&self, p: Vec2) -> Option<CellIdx> {
        let c0 = self.cell_of(p);
        let max_r = self.width.max(self.height) as i32;
        let mut best: Option<(f64, CellIdx)> = None;
        for radius in 0..=max_r {
            // Any cell at ring `radius` is at least (radius - 1) cells away.
            if let Some((d, _)) = best {
                if d < (radius as f64 - 1.0) * self.resolution {
                    break;
                }
            }
            for dr in -radius..=radius {
                for dc in -radius..=radius {
                    if dr.abs() != radius && dc.abs() != radius {
                        continue;
                    }
                    let c = CellIdx::new(c0.col + dc, c0.row + dr);
                    if !self.is_free(c) {
                        continue;
                    }
                    let d = self.center(c).dist(p);
                    let better = match best {
                        None => true,
                        Some((bd, bc)) => d < bd || (d == bd && c < bc),
                    };
                    if better {
                        best = Some((d, c));
                    }
                }
            }
        }
        best.map(|(_, c)| c)
    }

    /// Free cells 8-adjacent to an object's footprint.
    pub fn approach_cells(&self, obj: &SceneObject) -> Vec<CellIdx> {
        obj.footprint
            .expand(1)
            .cells()
            .filter(|c| !obj.footprint.contains(*c) && self.is_free(*c))
            .collect()
    }

    pub fn object(&self, id: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Number of free cells reachable from `start` by 4-connected moves.
    pub fn flood_fill_count(&self, start: CellIdx) -> usize {
        if !self.is_free(start) {
            return 0;
        }
        let mut seen = vec![false; self.width * self.height];
        let mut stack = vec![start];
        seen[self.index(start).unwrap()] = true;
        let mut n = 0;
        while let Some(c) = stack.pop() {
            n += 1;
            for (dc, dr) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let nb = CellIdx::new(c.col + dc, c.row + dr);
                if let Some(k) = self.index(nb) {
                    if !seen[k] && self.cells[k] == Cell::Free {
                        seen[k] = true;
                        stack.push(nb);
                    }
                }
            }
        }
        n
    }

    pub fn is_connected(&self) -> bool {
        match self.free_cells().next() {
            Some(s) => self.flood_fill_count(s) == self.free_count(),
            None => false,
        }
    }

    /// Segment test against obstacle cells, sampled finely enough to catch
    /// corner clips. `margin` widens the segment laterally.
    pub fn segment_clear(&self, a: Vec2, b: Vec2, margin: f64) -> bool {
        let d = b - a;
        let len = d.norm();
        let n = ((len / (self.resolution * 0.1)).ceil() as usize).max(1);
        let perp = if len > 0.0 {
            Vec2::new(-d.y / len, d.x / len)
        } else {
            Vec2::default()
        };
        let offsets: &[f64] = if margin > 0.0 {
            &[0.0, 1.0, -1.0]
        } else {
            &[0.0]
        };
        for &o in offsets {
            let shift = perp * (o * margin);
            for i in 0..=n {
                let p = a + d * (i as f64 / n as f64) + shift;
                if !self.is_free_point(p) {
                    return false;
                }
            }
        }
        true
    }
}
