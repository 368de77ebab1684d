use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EmbeddingModel, ItemId, Scorer};
use crate::error::{invalid, Result};
use crate::exec::{map_indexed, Execution};

const MAX_ITERATIONS: usize = 50;

/// Item-to-group assignment from k-means over item embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    /// Group id per item, indexed by item id.
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub d: usize,
}

impl Grouping {
    pub fn group_of(&self, item: ItemId) -> Option<usize> {
        self.assignment.get(item.index()).copied()
    }

    /// `item_id,group_id` lines with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "item_id,group_id")?;
        for (item, group) in self.assignment.iter().enumerate() {
            writeln!(out, "{item},{group}")?;
        }
        Ok(())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, ties to the lower group id.
fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Point maximising `score`, ties to the lowest item id.
fn argmax_point(n: usize, score: impl Fn(usize) -> f64) -> usize {
    let mut best = 0;
    let mut best_s = f64::NEG_INFINITY;
    for i in 0..n {
        let s = score(i);
        if s > best_s {
            best_s = s;
            best = i;
        }
    }
    best
}

/// Groups items into `d` clusters: seeded farthest-point initialisation then
/// at most 50 Lloyd iterations. Empty clusters are re-seeded with the point
/// farthest from its own centroid.
pub fn group_items(model: &EmbeddingModel, d: usize, seed: u64, exec: Execution) -> Result<Grouping> {
    let n = model.n_items();
    if d == 0 || d > n {
        return Err(invalid(format!("cannot form {d} groups from {n} items")));
    }
    let points: Vec<&[f64]> = model
        .items()
        .map(|v| model.item_vec(v).expect("item in range"))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..n);
    let mut centroids = vec![points[first].to_vec()];
    let mut min_dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < d {
        let next = argmax_point(n, |i| min_dist[i]);
        centroids.push(points[next].to_vec());
        for (i, p) in points.iter().enumerate() {
            min_dist[i] = min_dist[i].min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }

    let mut assignment = map_indexed(n, exec, |i| nearest(points[i], &centroids));
    for _ in 0..MAX_ITERATIONS {
        let k = model.dim();
        let mut sums = vec![vec![0.0; k]; d];
        let mut counts = vec![0usize; d];
        for (p, &c) in points.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        for c in 0..d {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..d {
            if counts[c] == 0 {
                let far = argmax_point(n, |i| sq_dist(points[i], &centroids[assignment[i]]));
                centroids[c] = points[far].to_vec();
                assignment[far] = c;
            }
        }
        let next = map_indexed(n, exec, |i| nearest(points[i], &centroids));
        if next == assignment {
            break;
        }
        assignment = next;
    }
    // Final assignment is nearest-centroid against the final centroids.
    let assignment = map_indexed(n, exec, |i| nearest(points[i], &centroids));
    Ok(Grouping {
        assignment,
        centroids,
        d,
    })
}
