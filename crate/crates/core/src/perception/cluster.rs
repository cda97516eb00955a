use std::collections::HashMap;

use nalgebra::Vector3;

use super::PerceptionError;
use crate::geometry::PointCloud;

/// Uniform grid with cell size equal to the query radius.
struct Grid {
    radius: f64,
    cells: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl Grid {
    fn new(points: &[Vector3<f64>], radius: f64) -> Self {
        let mut cells: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, radius)).or_default().push(i);
        }
        Self { radius, cells }
    }

    fn key(p: &Vector3<f64>, radius: f64) -> (i64, i64, i64) {
        (
            (p.x / radius).floor() as i64,
            (p.y / radius).floor() as i64,
            (p.z / radius).floor() as i64,
        )
    }

    /// Indices within `radius` of point `i` (excluding `i`), ascending.
    fn neighbors(&self, points: &[Vector3<f64>], i: usize) -> Vec<usize> {
        let p = points[i];
        let (cx, cy, cz) = Self::key(&p, self.radius);
        let r2 = self.radius * self.radius;
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        out.extend(
                            bucket
                                .iter()
                                .copied()
                                .filter(|&j| j != i && (points[j] - p).norm_squared() <= r2),
                        );
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Density clustering: a point is a core point when at least `min_neighbors`
/// other points lie within `radius`. Core points within `radius` of each
/// other share a cluster; a non-core point joins the cluster of its
/// lowest-indexed core neighbor; the rest is noise (`None`).
///
/// Cluster ids are assigned in order of each cluster's smallest core index.
pub fn radius_clusters(points: &[Vector3<f64>], radius: f64, min_neighbors: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let grid = Grid::new(points, radius);
    let neighbors: Vec<Vec<usize>> = (0..n).map(|i| grid.neighbors(points, i)).collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_neighbors).collect();

    let mut label = vec![None; n];
    let mut next = 0;
    for seed in 0..n {
        if !core[seed] || label[seed].is_some() {
            continue;
        }
        label[seed] = Some(next);
        let mut stack = vec![seed];
        while let Some(i) = stack.pop() {
            for &j in &neighbors[i] {
                if core[j] && label[j].is_none() {
                    label[j] = Some(next);
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    for i in 0..n {
        if core[i] {
            continue;
        }
        label[i] = neighbors[i].iter().find(|&&j| core[j]).and_then(|&j| label[j]);
    }
    label
}

/// Returns the most populous density cluster, points in input order. Ties go
/// to the cluster containing the lowest point index.
///
/// Dropping the other points can strip a border point's only core
/// neighbor, so the selection is repeated on its own output until nothing
/// changes. The result is therefore stable under a second application.
pub fn largest_cluster(cloud: &PointCloud, radius: f64, min_neighbors: usize) -> Result<PointCloud, PerceptionError> {
    if cloud.is_empty() {
        return Err(PerceptionError::EmptyCloud);
    }
    if !(radius > 0.0) {
        return Err(PerceptionError::InvalidRegion(format!(
            "cluster radius must be positive, got {radius}"
        )));
    }
    let mut current = select_largest(cloud, radius, min_neighbors)?;
    loop {
        let next = select_largest(&current, radius, min_neighbors)?;
        if next.len() == current.len() {
            return Ok(current);
        }
        current = next;
    }
}

fn select_largest(cloud: &PointCloud, radius: f64, min_neighbors: usize) -> Result<PointCloud, PerceptionError> {
    let labels = radius_clusters(cloud.points(), radius, min_neighbors);
    let count = labels.iter().flatten().max().map_or(0, |&m| m + 1);
    if count == 0 {
        return Err(PerceptionError::NoCluster);
    }
    let mut sizes = vec![0usize; count];
    let mut first = vec![usize::MAX; count];
    for (i, l) in labels.iter().enumerate() {
        if let Some(l) = *l {
            sizes[l] += 1;
            first[l] = first[l].min(i);
        }
    }
    let best = (0..count)
        .min_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(first[a].cmp(&first[b])))
        .expect("at least one cluster");
    Ok(cloud.filtered(|i, _| labels[i] == Some(best)))
}
