//! DBSCAN over 2D points with a uniform-grid neighbour index.

use std::collections::HashMap;

use crate::world::Vec2;

/// Cluster id per point, `None` for noise. Points are scanned in index order
/// and clusters are numbered in discovery order, so a border point reachable
/// from two clusters joins the one discovered first.
pub fn dbscan(points: &[Vec2], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    assert!(eps > 0.0 && min_pts >= 1);
    let key = |p: Vec2| ((p.x / eps).floor() as i64, (p.y / eps).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, &p) in points.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i);
    }
    let eps2 = eps * eps;
    let neighbours = |i: usize| -> Vec<usize> {
        let (kx, ky) = key(points[i]);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(bucket) = grid.get(&(kx + dx, ky + dy)) {
                    for &j in bucket {
                        let d = points[j] - points[i];
                        if d.x * d.x + d.y * d.y <= eps2 {
                            out.push(j);
                        }
                    }
                }
            }
        }
        out
    };

    let mut label: Vec<Option<usize>> = vec![None; points.len()];
    let mut visited = vec![false; points.len()];
    let mut next = 0usize;
    for i in 0..points.len() {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let nb = neighbours(i);
        if nb.len() < min_pts {
            continue;
        }
        let cid = next;
        next += 1;
        label[i] = Some(cid);
        let mut queue = nb;
        while let Some(j) = queue.pop() {
            if label[j].is_none() {
                label[j] = Some(cid);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let nj = neighbours(j);
            if nj.len() >= min_pts {
                queue.extend(
                    nj.into_iter()
                        .filter(|&k| label[k].is_none() || !visited[k]),
                );
            }
        }
    }
    label
}

/// A cluster centroid with its member count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cluster {
    pub centroid: Vec2,
    pub size: usize,
}

/// DBSCAN, then centroids sorted by size (descending, stable in discovery
/// order) and truncated to `k_max`.
pub fn cluster_waypoints(points: &[Vec2], eps: f64, min_pts: usize, k_max: usize) -> Vec<Cluster> {
    let labels = dbscan(points, eps, min_pts);
    let n = labels.iter().flatten().map(|&c| c + 1).max().unwrap_or(0);
    let mut sums = vec![(0.0, 0.0, 0usize); n];
    for (p, l) in points.iter().zip(&labels) {
        if let Some(c) = *l {
            sums[c].0 += p.x;
            sums[c].1 += p.y;
            sums[c].2 += 1;
        }
    }
    let mut clusters: Vec<Cluster> = sums
        .into_iter()
        .map(|(sx, sy, k)| Cluster {
            centroid: Vec2::new(sx / k as f64, sy / k as f64),
            size: k,
        })
        .collect();
    clusters.sort_by_key(|c| std::cmp::Reverse(c.size));
    clusters.truncate(k_max);
    clusters
}
