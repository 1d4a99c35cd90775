//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use visor_core::learn::{
    gspo_objective, sequence_reward, sft_loss, sft_target, synthetic_prompts, GroupRollout,
    KlPlacement, Member, RLConfig, RatioLevel, RewardWeights, SyntheticConfig, ToyPolicy, N_PARAMS,
};
use visor_core::sensors::{render_panorama, PixelClass};
use visor_core::world::{generate_world, Cell, CellIdx, GridWorld, Pose, Vec2, WorldConfig};

/// A `size`×`size` interior maze: a carved spanning tree with some walls
/// knocked out for loops, then random extra blocks (which may disconnect it).
pub fn random_maze(seed: u64, size: usize) -> GridWorld {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = size + 2;
    let mut w = GridWorld::open_room(n, n, 0.25);
    for r in 1..=size {
        for c in 1..=size {
            w.set_cell(CellIdx::new(c as i32, r as i32), Cell::Obstacle);
        }
    }
    let half = size.div_ceil(2);
    let at = |x: usize, y: usize| CellIdx::new(1 + 2 * x as i32, 1 + 2 * y as i32);
    let mut seen = vec![false; half * half];
    let mut stack = vec![(0usize, 0usize)];
    seen[0] = true;
    w.set_cell(at(0, 0), Cell::Free);
    while let Some(&(x, y)) = stack.last() {
        let mut nbrs: Vec<(usize, usize)> = [(1i32, 0i32), (-1, 0), (0, 1), (0, -1)]
            .iter()
            .filter_map(|&(dx, dy)| {
                let (nx, ny) = (x as i32 + dx, y as i32 + dy);
                (nx >= 0 && ny >= 0 && (nx as usize) < half && (ny as usize) < half)
                    .then_some((nx as usize, ny as usize))
            })
            .filter(|&(nx, ny)| !seen[ny * half + nx])
            .collect();
        if nbrs.is_empty() {
            stack.pop();
            continue;
        }
        nbrs.shuffle(&mut rng);
        let (nx, ny) = nbrs[0];
        seen[ny * half + nx] = true;
        let (a, b) = (at(x, y), at(nx, ny));
        w.set_cell(
            CellIdx::new((a.col + b.col) / 2, (a.row + b.row) / 2),
            Cell::Free,
        );
        w.set_cell(b, Cell::Free);
        stack.push((nx, ny));
    }
    let inside =
        |c: CellIdx| c.col >= 1 && c.row >= 1 && c.col <= size as i32 && c.row <= size as i32;
    for r in 1..=size {
        for c in 1..=size {
            let cell = CellIdx::new(c as i32, r as i32);
            if inside(cell) {
                if rng.gen_bool(0.25) {
                    w.set_cell(cell, Cell::Free);
                } else if rng.gen_bool(0.03) {
                    w.set_cell(cell, Cell::Obstacle);
                }
            }
        }
    }
    w
}

/// Textbook Dijkstra over 8-connected free cells without corner cutting,
/// accumulating floating-point costs in meters.
pub fn dijkstra(world: &GridWorld, from: CellIdx, to: CellIdx) -> Option<f64> {
    if !world.is_free(from) || !world.is_free(to) {
        return None;
    }
    let idx = |c: CellIdx| c.row as usize * world.width + c.col as usize;
    let mut dist = vec![f64::INFINITY; world.width * world.height];
    let mut done = vec![false; dist.len()];
    dist[idx(from)] = 0.0;
    // O(V^2) selection keeps the oracle free of heap ordering subtleties.
    loop {
        let mut best: Option<(usize, f64)> = None;
        for (k, &d) in dist.iter().enumerate() {
            if !done[k] && d.is_finite() && best.is_none_or(|(_, b)| d < b) {
                best = Some((k, d));
            }
        }
        let (k, d) = best?;
        done[k] = true;
        let c = CellIdx::new((k % world.width) as i32, (k / world.width) as i32);
        if c == to {
            return Some(d);
        }
        for dc in -1..=1 {
            for dr in -1..=1 {
                if dc == 0 && dr == 0 {
                    continue;
                }
                let nb = CellIdx::new(c.col + dc, c.row + dr);
                if !world.is_free(nb) {
                    continue;
                }
                let diag = dc != 0 && dr != 0;
                if diag
                    && (!world.is_free(CellIdx::new(c.col + dc, c.row))
                        || !world.is_free(CellIdx::new(c.col, c.row + dr)))
                {
                    continue;
                }
                let step = if diag { 2f64.sqrt() } else { 1.0 } * world.resolution;
                let nk = idx(nb);
                if d + step < dist[nk] {
                    dist[nk] = d + step;
                }
            }
        }
    }
}

pub fn free_cells(world: &GridWorld) -> Vec<CellIdx> {
    (0..world.height as i32)
        .flat_map(|r| (0..world.width as i32).map(move |c| CellIdx::new(c, r)))
        .filter(|&c| world.is_free(c))
        .collect()
}

/// First point along a ray that lies in a wall cell (an obstacle not owned
/// by an object), found by marching in 1 mm steps.
pub fn march_to_wall(world: &GridWorld, origin: Vec2, angle: f64, max: f64) -> Option<Vec2> {
    let dir = Vec2::from_angle(angle);
    let mut t = 0.0;
    while t < max {
        let p = origin + dir * t;
        let c = world.cell_of(p);
        if !world.is_free(c) && world.occupant(c).is_none() {
            return Some(p);
        }
        t += 0.001;
    }
    None
}

/// `pixel_to_world` errors in cells at `n` random wall pixels, each against
/// a marched ray.
pub fn pixel_round_trip_errors(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = WorldConfig::default();
    let mut errors = Vec::new();
    let mut world_seed = seed;
    while errors.len() < n {
        world_seed += 1;
        let world = generate_world(world_seed, &cfg).expect("world");
        let free = free_cells(&world);
        for _ in 0..4 {
            let c = *free.choose(&mut rng).unwrap();
            let centre = world.center(c);
            if world.clearance(centre) < 0.3 {
                continue;
            }
            let pose = Pose::new(
                centre.x,
                centre.y,
                rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
            );
            let obs = render_panorama(&world, pose, 20.0).expect("render");
            let mut tries = 0;
            let mut got = 0;
            while got < 5 && tries < 500 {
                tries += 1;
                let (row, col) = (
                    rng.gen_range(0..obs.height()),
                    rng.gen_range(0..obs.width()),
                );
                if obs.class_at(row, col) != PixelClass::Wall {
                    continue;
                }
                let p = visor_core::sensors::pixel_to_world(&obs, pose, row, col);
                let angle = pose.heading + obs.rig.column_angle(col);
                let truth =
                    march_to_wall(&world, pose.pos(), angle, 30.0).expect("ray reaches a wall");
                errors.push(p.dist(truth) / world.resolution);
                got += 1;
            }
            if errors.len() >= n {
                break;
            }
        }
    }
    errors.truncate(n);
    errors
}

/// Brute-force DBSCAN check: core points must form exactly the connected
/// components of the core graph, noise must be exactly the points with no
/// core neighbour, and every border point must join a neighbouring core
/// point's cluster (the one ambiguity the algorithm leaves open).
pub fn dbscan_matches_oracle(
    points: &[Vec2],
    eps: f64,
    min_pts: usize,
    labels: &[Option<usize>],
) -> Result<(), String> {
    let n = points.len();
    let near = |i: usize, j: usize| points[i].dist(points[j]) <= eps;
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts)
        .collect();
    // Components of the core graph by union-find.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for i in 0..n {
        for j in 0..i {
            if core[i] && core[j] && near(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut to_label: BTreeMap<usize, usize> = BTreeMap::new();
    let mut from_label: BTreeMap<usize, usize> = BTreeMap::new();
    for i in (0..n).filter(|&i| core[i]) {
        let comp = find(&mut parent, i);
        let l = labels[i].ok_or(format!("core point {i} labelled noise"))?;
        if *to_label.entry(comp).or_insert(l) != l || *from_label.entry(l).or_insert(comp) != comp {
            return Err(format!("core point {i} breaks the component bijection"));
        }
    }
    for i in (0..n).filter(|&i| !core[i]) {
        let reach: BTreeSet<usize> = (0..n)
            .filter(|&j| core[j] && near(i, j))
            .map(|j| to_label[&find(&mut parent, j)])
            .collect();
        match labels[i] {
            None if reach.is_empty() => {}
            None => return Err(format!("border point {i} labelled noise")),
            Some(l) if reach.contains(&l) => {}
            Some(l) => return Err(format!("point {i} has label {l}, reachable {reach:?}")),
        }
    }
    let used: BTreeSet<usize> = labels.iter().flatten().copied().collect();
    if used.len() != to_label.len() {
        return Err("cluster count differs".into());
    }
    Ok(())
}

/// Clumpy random point set.
pub fn random_points(rng: &mut ChaCha8Rng) -> Vec<Vec2> {
    let clumps = rng.gen_range(1..5);
    let mut pts = Vec::new();
    for _ in 0..clumps {
        let c = Vec2::new(rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0));
        let spread = rng.gen_range(0.1..0.8);
        for _ in 0..rng.gen_range(3..40) {
            pts.push(
                c + Vec2::new(
                    rng.gen_range(-spread..spread),
                    rng.gen_range(-spread..spread),
                ),
            );
        }
    }
    for _ in 0..rng.gen_range(0..15) {
        pts.push(Vec2::new(rng.gen_range(0.0..6.0), rng.gen_range(0.0..6.0)));
    }
    pts
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, with tiny gradients compared absolutely.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

pub fn central_difference(f: impl Fn(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
    (0..theta.len())
        .map(|k| {
            let mut p = theta.to_vec();
            p[k] += h;
            let up = f(&p);
            p[k] -= 2.0 * h;
            (up - f(&p)) / (2.0 * h)
        })
        .collect()
}

fn random_policy(rng: &mut ChaCha8Rng) -> ToyPolicy {
    ToyPolicy::new(
        (0..N_PARAMS).map(|_| rng.gen_range(-1.5..1.5)).collect(),
        1.0,
    )
}

fn prompts(seed: u64, n: usize) -> Vec<visor_core::learn::ToyPrompt> {
    synthetic_prompts(&SyntheticConfig {
        n,
        seed,
        stop_fraction: 0.3,
        ..SyntheticConfig::default()
    })
}

/// SFT gradient relative error at a random parameter point.
pub fn sft_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let policy = random_policy(&mut rng);
    let batch: Vec<_> = prompts(seed, 12)
        .into_iter()
        .filter_map(|p| sft_target(&p).map(|t| (p, t)))
        .collect();
    let (_, grad) = sft_loss(&policy, &batch).unwrap();
    let fd = central_difference(
        |theta| {
            sft_loss(&ToyPolicy::new(theta.to_vec(), policy.temperature), &batch)
                .unwrap()
                .0
        },
        &policy.params,
        1e-5,
    );
    rel_err(&grad, &fd)
}

/// Objective gradient relative error at a random parameter point, with
/// groups of 4, β = 0.01 and a reference policy distinct from the current one.
pub fn gspo_gradient_error(seed: u64, ratio: RatioLevel, kl: KlPlacement) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let policy = random_policy(&mut rng);
    let old = random_policy(&mut rng);
    let reference = random_policy(&mut rng);
    let weights = RewardWeights::default();
    let rollouts: Vec<GroupRollout> = prompts(seed, 6)
        .into_iter()
        .map(|prompt| {
            let members = (0..4)
                .map(|_| {
                    let tokens = old.sample(&prompt, &mut rng);
                    // Old log-probs near the current ones put most ratios
                    // inside the clip band and a few outside it.
                    let logp_old = policy
                        .token_logps(&prompt, &tokens)
                        .iter()
                        .map(|l| l + rng.gen_range(-0.15..0.15))
                        .collect();
                    Member {
                        reward: sequence_reward(&prompt, &tokens, weights),
                        tokens,
                        logp_old,
                    }
                })
                .collect();
            GroupRollout { prompt, members }
        })
        .collect();
    let cfg = RLConfig {
        beta: 0.01,
        group_size: 4,
        ratio,
        kl,
        ..RLConfig::default()
    };
    let obj = gspo_objective(&policy, &rollouts, &cfg, &reference).unwrap();
    let fd = central_difference(
        |theta| {
            gspo_objective(
                &ToyPolicy::new(theta.to_vec(), policy.temperature),
                &rollouts,
                &cfg,
                &reference,
            )
            .unwrap()
            .value
        },
        &policy.params,
        1e-5,
    );
    rel_err(&obj.grad, &fd)
}
