//! Procedural world generation: rooms on a jittered grid, door gaps along a
//! random spanning tree (plus a few extra doors), attributed objects.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::semantics::{object_satisfies, Mention, Mentions, SIDE_MARGIN};
use super::{
    Attribute, Cell, CellIdx, CellRect, GridWorld, Relation, Room, SceneObject, Vec2, WorldError,
    CATEGORIES, COLORS, FEATURES, MATERIALS, ROOM_NAMES,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    /// Grid width in cells.
    pub width: usize,
    /// Grid height in cells.
    pub height: usize,
    /// Meters per cell.
    pub resolution: f64,
    pub rooms_x: usize,
    pub rooms_y: usize,
    pub n_objects: usize,
    /// Minimum door gap in cells.
    pub min_door: usize,
    pub max_attempts: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            width: 48,
            height: 48,
            resolution: 0.25,
            rooms_x: 2,
            rooms_y: 2,
            n_objects: 10,
            min_door: 4,
            max_attempts: 64,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: &str| Err(WorldError::InvalidConfig(m.to_string()));
        let rooms = self.rooms_x * self.rooms_y;
        if rooms < 2 {
            return bad("at least 2 rooms required");
        }
        if rooms > ROOM_NAMES.len() {
            return bad("too many rooms for the room-name vocabulary");
        }
        if self.n_objects < 4 {
            return bad("at least 4 objects required");
        }
        if self.n_objects > 64 {
            return bad("at most 64 objects supported");
        }
        if self.width < 40 || self.height < 40 {
            return bad("grid side must be at least 40 cells");
        }
        if self.resolution.is_nan() || self.resolution <= 0.0 {
            return bad("resolution must be positive");
        }
        if self.min_door < 3 {
            return bad("doors must be at least 3 cells wide");
        }
        let interior_x = (self.width - 2 - (self.rooms_x - 1)) / self.rooms_x;
        let interior_y = (self.height - 2 - (self.rooms_y - 1)) / self.rooms_y;
        if interior_x < 10 || interior_y < 10 {
            return bad("rooms would be narrower than 10 cells");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be positive");
        }
        Ok(())
    }
}

/// Generate a world. Deterministic for a fixed `(seed, config)`.
pub fn generate_world(seed: u64, config: &WorldConfig) -> Result<GridWorld, WorldError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last = String::new();
    for _ in 0..config.max_attempts {
        match attempt(&mut rng, seed, config) {
            Ok(w) => return Ok(w),
            Err(reason) => last = reason,
        }
    }
    Err(WorldError::GenerationFailed {
        attempts: config.max_attempts,
        reason: last,
    })
}

/// Wall lines splitting `[0, n)` into `k` rooms; returns `k + 1` boundaries
/// including the outer walls at 0 and n - 1.
fn split_lines(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<i32> {
    let mut lines = vec![0i32];
    let span = (n - 1) as f64 / k as f64;
    for i in 1..k {
        let base = (span * i as f64).round() as i32;
        lines.push(base + rng.gen_range(-2..=2));
    }
    lines.push(n as i32 - 1);
    lines
}

fn attempt(rng: &mut ChaCha8Rng, seed: u64, cfg: &WorldConfig) -> Result<GridWorld, String> {
    let (w, h) = (cfg.width, cfg.height);
    let mut cells = vec![Cell::Free; w * h];
    let xs = split_lines(rng, w, cfg.rooms_x);
    let ys = split_lines(rng, h, cfg.rooms_y);
    for r in 0..h as i32 {
        for c in 0..w as i32 {
            if xs.contains(&c) || ys.contains(&r) {
                cells[r as usize * w + c as usize] = Cell::Obstacle;
            }
        }
    }

    let mut names: Vec<&str> = ROOM_NAMES.to_vec();
    names.shuffle(rng);
    let mut rooms = Vec::new();
    for j in 0..cfg.rooms_y {
        for i in 0..cfg.rooms_x {
            let rect = CellRect::new(xs[i] + 1, ys[j] + 1, xs[i + 1], ys[j + 1]);
            if rect.width() < 10 || rect.height() < 10 {
                return Err("room too small after jitter".into());
            }
            rooms.push(Room {
                rect,
                name: names[rooms.len()].to_string(),
            });
        }
    }

    // Room adjacency: (a, b, wall cells shared).
    let room_id = |i: usize, j: usize| j * cfg.rooms_x + i;
    let mut edges: Vec<(usize, usize, Vec<CellIdx>)> = Vec::new();
    for j in 0..cfg.rooms_y {
        for i in 0..cfg.rooms_x {
            if i + 1 < cfg.rooms_x {
                let wall: Vec<CellIdx> = (ys[j] + 1..ys[j + 1])
                    .map(|r| CellIdx::new(xs[i + 1], r))
                    .collect();
                edges.push((room_id(i, j), room_id(i + 1, j), wall));
            }
            if j + 1 < cfg.rooms_y {
                let wall: Vec<CellIdx> = (xs[i] + 1..xs[i + 1])
                    .map(|c| CellIdx::new(c, ys[j + 1]))
                    .collect();
                edges.push((room_id(i, j), room_id(i, j + 1), wall));
            }
        }
    }
    edges.shuffle(rng);
    let mut parent: Vec<usize> = (0..rooms.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    let mut door_cells: Vec<CellIdx> = Vec::new();
    for (a, b, wall) in &edges {
        let (ra, rb) = (find(&mut parent, *a), find(&mut parent, *b));
        let tree_edge = ra != rb;
        if tree_edge {
            parent[ra] = rb;
        } else if !rng.gen_bool(0.35) {
            continue;
        }
        let width = cfg.min_door + rng.gen_range(0..=1);
        let lo = 2;
        let hi = wall.len() as i32 - width as i32 - 2;
        if hi < lo {
            return Err("wall too short for a door".into());
        }
        let off = rng.gen_range(lo..=hi) as usize;
        for c in &wall[off..off + width] {
            cells[c.row as usize * w + c.col as usize] = Cell::Free;
            door_cells.push(*c);
        }
    }

    let mut world = GridWorld::from_parts(
        w,
        h,
        cfg.resolution,
        cells,
        rooms,
        Vec::new(),
        seed,
        cfg.clone(),
    );
    place_objects(rng, &mut world, cfg, &door_cells)?;
    compute_relations(&mut world);
    if !world.is_connected() {
        return Err("free space is not 4-connected".into());
    }
    if !(0..world.objects.len()).any(|i| description_unique(&world, i)) {
        return Err("no object has a unique description".into());
    }
    Ok(world)
}

fn render_color(base: [u8; 3], id: u32) -> [u8; 3] {
    // Push away from the nearer end of the range so offsets never clip.
    let shift = |v: u8, off: u32| -> u8 {
        if v > 127 {
            v - off as u8
        } else {
            v + off as u8
        }
    };
    [
        base[0],
        shift(base[1], (id % 8) * 3),
        shift(base[2], ((id / 8) % 8) * 3),
    ]
}

const TOPPABLE: &[&str] = &[
    "table",
    "cabinet",
    "desk",
    "dresser",
    "bookshelf",
    "refrigerator",
    "wardrobe",
];

fn place_objects(
    rng: &mut ChaCha8Rng,
    world: &mut GridWorld,
    cfg: &WorldConfig,
    doors: &[CellIdx],
) -> Result<(), String> {
    let n_rooms = world.rooms.len();
    let mut placed: Vec<SceneObject> = Vec::new();
    for k in 0..cfg.n_objects {
        let dup = !placed.is_empty() && rng.gen_bool(0.4);
        let (category, room, color) = if dup {
            let src = placed[rng.gen_range(0..placed.len())].clone();
            let room = if rng.gen_bool(0.6) {
                world.room_at(src.anchor).unwrap_or(0)
            } else {
                rng.gen_range(0..n_rooms)
            };
            let color = if rng.gen_bool(0.5) {
                src.color().unwrap().to_string()
            } else {
                COLORS[rng.gen_range(0..COLORS.len())].0.to_string()
            };
            (src.category.clone(), room, color)
        } else {
            let room = if k < n_rooms {
                k
            } else {
                rng.gen_range(0..n_rooms)
            };
            (
                CATEGORIES[rng.gen_range(0..CATEGORIES.len())].0.to_string(),
                room,
                COLORS[rng.gen_range(0..COLORS.len())].0.to_string(),
            )
        };
        let ((fw, fh), height) = super::Vocabulary::category_shape(&category).unwrap();
        let (fw, fh) = if rng.gen_bool(0.5) {
            (fw, fh)
        } else {
            (fh, fw)
        };
        let rect = world.rooms[room].rect;
        let mut footprint = None;
        for _ in 0..200 {
            let x0 = rng.gen_range(rect.x0 + 1..=rect.x1 - 1 - fw);
            let y0 = rng.gen_range(rect.y0 + 1..=rect.y1 - 1 - fh);
            let fp = CellRect::new(x0, y0, x0 + fw, y0 + fh);
            let clear_of_objects = placed
                .iter()
                .all(|o| !o.footprint.expand(1).intersects(&fp));
            let clear_of_doors = doors.iter().all(|d| !fp.expand(2).contains(*d));
            if clear_of_objects && clear_of_doors {
                footprint = Some(fp);
                break;
            }
        }
        let Some(fp) = footprint else {
            return Err(format!("could not place object {k}"));
        };
        let id = placed.len() as u32;
        let mut intrinsic = vec![Attribute::Color(color.clone())];
        if rng.gen_bool(0.6) {
            intrinsic.push(Attribute::Material(
                MATERIALS[rng.gen_range(0..MATERIALS.len())].to_string(),
            ));
        }
        if TOPPABLE.contains(&category.as_str()) && rng.gen_bool(0.45) {
            intrinsic.push(Attribute::OnTop(
                FEATURES[rng.gen_range(0..FEATURES.len())].to_string(),
            ));
        }
        let base = super::Vocabulary::color_rgb(&color).unwrap();
        let res = world.resolution;
        placed.push(SceneObject {
            id,
            category,
            anchor: Vec2::new(
                (fp.x0 + fp.x1) as f64 * 0.5 * res,
                (fp.y0 + fp.y1) as f64 * 0.5 * res,
            ),
            footprint: fp,
            height,
            intrinsic,
            extrinsic: Vec::new(),
            render_color: render_color(base, id),
        });
    }
    for o in &placed {
        for c in o.footprint.cells() {
            world.set_cell(c, Cell::Obstacle);
        }
    }
    world.objects = placed;
    world.rebuild_occupancy();
    Ok(())
}

/// Fill every object's extrinsic relation list from geometry.
pub(crate) fn compute_relations(world: &mut GridWorld) {
    let n = world.objects.len();
    let mut all = Vec::with_capacity(n);
    for i in 0..n {
        let o = &world.objects[i];
        let room = world.room_at(o.anchor);
        let mut rels = Vec::new();
        if let Some(r) = room {
            rels.push(Relation::InRoom(r));
        }
        for (j, p) in world.objects.iter().enumerate() {
            if i == j {
                continue;
            }
            if o.anchor.dist(p.anchor) <= super::near_radius() {
                rels.push(Relation::Near(p.id));
            }
            if room.is_some() && world.room_at(p.anchor) == room {
                if o.anchor.x < p.anchor.x - SIDE_MARGIN {
                    rels.push(Relation::LeftOf(p.id));
                } else if o.anchor.x > p.anchor.x + SIDE_MARGIN {
                    rels.push(Relation::RightOf(p.id));
                }
            }
        }
        all.push(rels);
    }
    for (o, rels) in world.objects.iter_mut().zip(all) {
        o.extrinsic = rels;
    }
}

/// Every cue an object carries, expressed at category level.
pub fn full_mentions(world: &GridWorld, idx: usize) -> Mentions {
    let o = &world.objects[idx];
    let mut cues: Vec<Mention> = o
        .intrinsic
        .iter()
        .map(|a| match a {
            Attribute::Color(c) => Mention::Color(c.clone()),
            Attribute::Material(m) => Mention::Material(m.clone()),
            Attribute::OnTop(f) => Mention::OnTop(f.clone()),
        })
        .collect();
    for r in &o.extrinsic {
        let cat = |id: u32| {
            world
                .object(id)
                .map(|p| p.category.clone())
                .unwrap_or_default()
        };
        cues.push(match *r {
            Relation::InRoom(k) => Mention::InRoom(world.rooms[k].name.clone()),
            Relation::Near(id) => Mention::Near(cat(id)),
            Relation::LeftOf(id) => Mention::LeftOf(cat(id)),
            Relation::RightOf(id) => Mention::RightOf(cat(id)),
        });
    }
    cues.dedup();
    Mentions {
        category: o.category.clone(),
        cues,
    }
}

fn description_unique(world: &GridWorld, idx: usize) -> bool {
    let m = full_mentions(world, idx);
    (0..world.objects.len()).all(|j| j == idx || !object_satisfies(world, j, &m))
}
