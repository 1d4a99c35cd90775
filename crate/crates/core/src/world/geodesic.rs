//! Geodesic distances on the free-cell graph.
//!
//! Moves are 8-connected; a diagonal move requires both orthogonal
//! neighbours to be free (no corner cutting). Costs are carried as exact
//! `(straight, diagonal)` move counts so that every optimal path between two
//! cells reports bit-identical lengths regardless of search order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{CellIdx, GridWorld, SceneObject, Vec2};

/// Length of a diagonal move in cells.
pub const DIAGONAL_COST: f64 = std::f64::consts::SQRT_2;

pub(crate) const MOVES: [(i32, i32); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

pub type CellPath = Vec<CellIdx>;

/// Neighbours reachable in one move, with `true` for diagonal moves.
pub(crate) fn neighbours(
    world: &GridWorld,
    c: CellIdx,
) -> impl Iterator<Item = (CellIdx, bool)> + '_ {
    MOVES.iter().filter_map(move |&(dc, dr)| {
        let n = CellIdx::new(c.col + dc, c.row + dr);
        if !world.is_free(n) {
            return None;
        }
        let diag = dc != 0 && dr != 0;
        if diag
            && (!world.is_free(CellIdx::new(c.col + dc, c.row))
                || !world.is_free(CellIdx::new(c.col, c.row + dr)))
        {
            return None;
        }
        Some((n, diag))
    })
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    key: f64,
    tie: u64,
    cell: CellIdx,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, o: &Self) -> Ordering {
        o.key
            .partial_cmp(&self.key)
            .unwrap_or(Ordering::Equal)
            .then_with(|| o.tie.cmp(&self.tie))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

fn count_cost(s: u32, d: u32) -> f64 {
    s as f64 + d as f64 * DIAGONAL_COST
}

fn octile(a: CellIdx, b: CellIdx) -> f64 {
    let dx = (a.col - b.col).unsigned_abs();
    let dy = (a.row - b.row).unsigned_abs();
    let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
    count_cost(hi - lo, lo)
}

/// Shortest 8-connected free path between two cells. `wall_penalty` adds a
/// per-cell surcharge (in cells) for entering cells that touch an obstacle;
/// zero yields true geodesics.
pub(crate) fn astar(
    world: &GridWorld,
    from: CellIdx,
    to: CellIdx,
    wall_penalty: f64,
) -> Option<(CellPath, u32, u32)> {
    if !world.is_free(from) || !world.is_free(to) {
        return None;
    }
    let n = world.width * world.height;
    let mut counts: Vec<Option<(u32, u32)>> = vec![None; n];
    let mut penalty = vec![0.0f64; n];
    let mut parent: Vec<u32> = vec![u32::MAX; n];
    let mut closed = vec![false; n];
    let idx = |c: CellIdx| world.index(c).unwrap();
    let touches_wall = |c: CellIdx| {
        MOVES
            .iter()
            .any(|&(dc, dr)| !world.is_free(CellIdx::new(c.col + dc, c.row + dr)))
    };
    let mut heap = BinaryHeap::new();
    let mut tie = 0u64;
    counts[idx(from)] = Some((0, 0));
    heap.push(Entry {
        key: octile(from, to),
        tie,
        cell: from,
    });
    while let Some(Entry { cell, .. }) = heap.pop() {
        let k = idx(cell);
        if closed[k] {
            continue;
        }
        closed[k] = true;
        if cell == to {
            let (s, d) = counts[k].unwrap();
            let mut path = vec![cell];
            let mut cur = k;
            while parent[cur] != u32::MAX {
                cur = parent[cur] as usize;
                path.push(CellIdx::new(
                    (cur % world.width) as i32,
                    (cur / world.width) as i32,
                ));
            }
            path.reverse();
            return Some((path, s, d));
        }
        let (s, d) = counts[k].unwrap();
        for (nb, diag) in neighbours(world, cell) {
            let nk = idx(nb);
            if closed[nk] {
                continue;
            }
            let (ns, nd) = if diag { (s, d + 1) } else { (s + 1, d) };
            let np = if wall_penalty > 0.0 && touches_wall(nb) {
                penalty[k] + wall_penalty
            } else {
                penalty[k]
            };
            let ng = count_cost(ns, nd) + np;
            let better = match counts[nk] {
                None => true,
                Some((os, od)) => ng < count_cost(os, od) + penalty[nk],
            };
            if better {
                counts[nk] = Some((ns, nd));
                penalty[nk] = np;
                parent[nk] = k as u32;
                tie += 1;
                heap.push(Entry {
                    key: ng + octile(nb, to),
                    tie,
                    cell: nb,
                });
            }
        }
    }
    None
}

/// Geodesic distance in meters between the cells containing `a` and `b`,
/// or `None` when either lies in an obstacle or no free path connects them.
pub fn geodesic_distance(world: &GridWorld, a: Vec2, b: Vec2) -> Option<f64> {
    if !world.contains_point(a) || !world.contains_point(b) {
        return None;
    }
    let (ca, cb) = (world.cell_of(a), world.cell_of(b));
    astar(world, ca, cb, 0.0).map(|(_, s, d)| count_cost(s, d) * world.resolution)
}

/// Distance-to-object field over every free cell.
///
/// The distance from a position to an object is the geodesic to one of the
/// free cells bordering its footprint plus the straight segment from that
/// cell's center to the object anchor, minimised over bordering cells.
#[derive(Debug, Clone)]
pub struct GoalField {
    width: usize,
    resolution: f64,
    dist: Vec<f64>,
}

impl GoalField {
    pub fn new(world: &GridWorld, target: &SceneObject) -> Self {
        let n = world.width * world.height;
        let mut dist = vec![f64::INFINITY; n];
        let mut heap = BinaryHeap::new();
        let mut tie = 0u64;
        for c in world.approach_cells(target) {
            let d = world.center(c).dist(target.anchor) / world.resolution;
            let k = world.index(c).unwrap();
            if d < dist[k] {
                dist[k] = d;
                tie += 1;
                heap.push(Entry {
                    key: d,
                    tie,
                    cell: c,
                });
            }
        }
        while let Some(Entry { key, cell, .. }) = heap.pop() {
            let k = world.index(cell).unwrap();
            if key > dist[k] {
                continue;
            }
            for (nb, diag) in neighbours(world, cell) {
                let nk = world.index(nb).unwrap();
                let nd = key + if diag { DIAGONAL_COST } else { 1.0 };
                if nd < dist[nk] {
                    dist[nk] = nd;
                    tie += 1;
                    heap.push(Entry {
                        key: nd,
                        tie,
                        cell: nb,
                    });
                }
            }
        }
        for d in &mut dist {
            *d *= world.resolution;
        }
        GoalField {
            width: world.width,
            resolution: world.resolution,
            dist,
        }
    }

    /// Distance in meters from the cell containing `p`; `None` if unreachable.
    pub fn at(&self, p: Vec2) -> Option<f64> {
        let c = CellIdx::new(
            (p.x / self.resolution).floor() as i32,
            (p.y / self.resolution).floor() as i32,
        );
        self.at_cell(c)
    }

    pub fn at_cell(&self, c: CellIdx) -> Option<f64> {
        if c.col < 0 || c.row < 0 || c.col as usize >= self.width {
            return None;
        }
        let k = c.row as usize * self.width + c.col as usize;
        self.dist.get(k).copied().filter(|d| d.is_finite())
    }
}
