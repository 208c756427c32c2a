//! K-means over tile histograms.
//!
//! Lloyd iterations with k-means++ seeding and squared Euclidean distance.
//! Equidistant centroids resolve to the lowest cluster id. An empty cluster
//! takes the point farthest from its own centroid (among clusters that can
//! spare a point).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::{MosaicError, Result};

pub const DEFAULT_CLUSTERS: usize = 90;
pub const DEFAULT_MAX_ITERS: usize = 100;

/// Tile-to-cluster partition plus centroids.
///
/// Members of each cluster are stored contiguously in `order`, cluster `c`
/// occupying `order[offsets[c]..offsets[c + 1]]`, sorted by tile id.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    centroids: Vec<Vec<f64>>,
    assignment: Vec<usize>,
    order: Vec<usize>,
    offsets: Vec<usize>,
    position: Vec<usize>,
    inertia_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn means(points: &[Vec<f64>], assignment: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(assignment) {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(p) {
            *s += v;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            s.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    sums
}

fn inertia(points: &[Vec<f64>], assignment: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &c)| sq_dist(p, &centroids[c]))
        .sum()
}

/// k-means++: first center uniform, each next center drawn with probability
/// proportional to squared distance from the nearest chosen center. When all
/// remaining distances are zero the next center is drawn uniformly.
fn seed_centroids<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.gen_range(0..n)].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            while dist[pick] == 0.0 {
                pick -= 1;
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        let c = points[next].clone();
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Moves points into empty clusters. Each empty cluster takes the point
/// farthest from its current centroid among clusters with more than one
/// member (lowest point index on ties); the centroid becomes that point.
fn repair_empty(points: &[Vec<f64>], assignment: &mut [usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    for &c in assignment.iter() {
        counts[c] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            let c = assignment[i];
            if counts[c] <= 1 {
                continue;
            }
            let d = sq_dist(p, &centroids[c]);
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        let (i, _) = best.expect("k <= n leaves a cluster with a spare point");
        counts[assignment[i]] -= 1;
        counts[empty] += 1;
        assignment[i] = empty;
        centroids[empty] = points[i].clone();
    }
}

fn assign_all(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    points.par_iter().map(|p| nearest(p, centroids).0).collect()
}

/// Fits `k` clusters to `points` with Lloyd's algorithm.
pub fn kmeans<R: Rng + ?Sized>(
    points: &[Vec<f64>],
    k: usize,
    max_iters: usize,
    rng: &mut R,
) -> Result<ClusterModel> {
    if k == 0 {
        return Err(MosaicError::InvalidArgument("cluster count must be >= 1".into()));
    }
    if points.is_empty() {
        return Err(MosaicError::InvalidArgument("no points to cluster".into()));
    }
    if k > points.len() {
        return Err(MosaicError::InvalidArgument(format!(
            "cluster count {k} exceeds the {} points",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(MosaicError::InvalidArgument("points differ in dimension".into()));
    }

    let mut centroids = seed_centroids(points, k, rng);
    let mut assignment = assign_all(points, &centroids);
    repair_empty(points, &mut assignment, &mut centroids);
    let mut history = Vec::new();
    for _ in 0..max_iters {
        centroids = means(points, &assignment, k);
        history.push(inertia(points, &assignment, &centroids));
        let mut next = assign_all(points, &centroids);
        repair_empty(points, &mut next, &mut centroids);
        if next == assignment {
            break;
        }
        assignment = next;
    }
    centroids = means(points, &assignment, k);
    let final_inertia = inertia(points, &assignment, &centroids);
    if history.last() != Some(&final_inertia) {
        history.push(final_inertia);
    }
    Ok(ClusterModel::build(centroids, assignment, history))
}

impl ClusterModel {
    fn build(centroids: Vec<Vec<f64>>, assignment: Vec<usize>, inertia_history: Vec<f64>) -> Self {
        let k = centroids.len();
        let mut counts = vec![0usize; k];
        for &c in &assignment {
            counts[c] += 1;
        }
        let mut offsets = Vec::with_capacity(k + 1);
        offsets.push(0);
        for c in 0..k {
            offsets.push(offsets[c] + counts[c]);
        }
        let mut cursor = offsets.clone();
        let mut order = vec![0; assignment.len()];
        let mut position = vec![0; assignment.len()];
        for (tile, &c) in assignment.iter().enumerate() {
            order[cursor[c]] = tile;
            position[tile] = cursor[c];
            cursor[c] += 1;
        }
        ClusterModel {
            centroids,
            assignment,
            order,
            offsets,
            position,
            inertia_history,
        }
    }

    /// Rebuilds a model from a tile-to-cluster map, centroids being the
    /// member means of `points`.
    pub fn from_assignment(points: &[Vec<f64>], assignment: Vec<usize>, k: usize) -> Result<Self> {
        if points.len() != assignment.len() {
            return Err(MosaicError::InvalidArgument(format!(
                "{} labels for {} points",
                assignment.len(),
                points.len()
            )));
        }
        if let Some(&c) = assignment.iter().find(|&&c| c >= k) {
            return Err(MosaicError::OutOfRange { index: c, len: k });
        }
        let centroids = if points.is_empty() { vec![Vec::new(); k] } else { means(points, &assignment, k) };
        let history = if points.is_empty() { Vec::new() } else { vec![inertia(points, &assignment, &centroids)] };
        Ok(ClusterModel::build(centroids, assignment, history))
    }

    pub fn num_clusters(&self) -> usize {
        self.centroids.len()
    }

    pub fn num_tiles(&self) -> usize {
        self.assignment.len()
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn cluster_of(&self, tile_id: usize) -> Result<usize> {
        self.assignment.get(tile_id).copied().ok_or(MosaicError::OutOfRange {
            index: tile_id,
            len: self.assignment.len(),
        })
    }

    /// Tile ids in cluster `c`, ascending.
    pub fn members(&self, c: usize) -> &[usize] {
        &self.order[self.offsets[c]..self.offsets[c + 1]]
    }

    /// Inertia after each centroid update, oldest first.
    pub fn inertia_history(&self) -> &[f64] {
        &self.inertia_history
    }

    pub fn inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(0.0)
    }

    /// Uniform draw from the members of `tile`'s cluster other than `tile`.
    /// `None` for singleton clusters.
    pub fn draw_within<R: Rng + ?Sized>(&self, tile: usize, rng: &mut R) -> Option<usize> {
        let c = self.assignment[tile];
        let (lo, hi) = (self.offsets[c], self.offsets[c + 1]);
        if hi - lo < 2 {
            return None;
        }
        let mut i = lo + rng.gen_range(0..hi - lo - 1);
        if i >= self.position[tile] {
            i += 1;
        }
        Some(self.order[i])
    }

    /// Uniform draw from every tile outside `tile`'s cluster. `None` when the
    /// cluster holds all tiles.
    pub fn draw_outside<R: Rng + ?Sized>(&self, tile: usize, rng: &mut R) -> Option<usize> {
        let c = self.assignment[tile];
        let (lo, hi) = (self.offsets[c], self.offsets[c + 1]);
        let outside = self.order.len() - (hi - lo);
        if outside == 0 {
            return None;
        }
        let mut i = rng.gen_range(0..outside);
        if i >= lo {
            i += hi - lo;
        }
        Some(self.order[i])
    }

    /// Text export: a `kmeans <K> <n>` header, then one `id cluster` line per tile.
    pub fn to_text(&self) -> String {
        let mut out = format!("kmeans {} {}\n", self.num_clusters(), self.num_tiles());
        for (id, c) in self.assignment.iter().enumerate() {
            let _ = writeln!(out, "{id} {c}");
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| MosaicError::io(path, e))
    }

    /// Parses [`to_text`](Self::to_text) output; centroids are recomputed
    /// from `points`, which must be the clustered histograms.
    pub fn from_text(text: &str, points: &[Vec<f64>]) -> Result<Self> {
        let bad = |message: String| MosaicError::Parse {
            what: "cluster model",
            message,
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let (k, n) = match fields.as_slice() {
            ["kmeans", k, n] => (
                k.parse::<usize>().map_err(|e| bad(format!("cluster count: {e}")))?,
                n.parse::<usize>().map_err(|e| bad(format!("tile count: {e}")))?,
            ),
            _ => return Err(bad(format!("bad header {header:?}"))),
        };
        if n != points.len() {
            return Err(bad(format!("model covers {n} tiles, database has {}", points.len())));
        }
        let mut assignment = vec![usize::MAX; n];
        for line in lines {
            let mut it = line.split_whitespace();
            let (Some(id), Some(c), None) = (it.next(), it.next(), it.next()) else {
                return Err(bad(format!("bad line {line:?}")));
            };
            let id: usize = id.parse().map_err(|e| bad(format!("tile id {id:?}: {e}")))?;
            let c: usize = c.parse().map_err(|e| bad(format!("cluster id {c:?}: {e}")))?;
            if id >= n || c >= k {
                return Err(bad(format!("line {line:?} out of range")));
            }
            assignment[id] = c;
        }
        if assignment.contains(&usize::MAX) {
            return Err(bad("some tiles have no cluster".into()));
        }
        ClusterModel::from_assignment(points, assignment, k)
    }

    pub fn load(path: &Path, points: &[Vec<f64>]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| MosaicError::io(path, e))?;
        Self::from_text(&text, points)
    }
}
