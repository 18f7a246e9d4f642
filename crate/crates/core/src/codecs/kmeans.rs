//! Lloyd's k-means with deterministic seeding.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::scalar::{dist_sq, Scalar};

pub const DEFAULT_ITERS: usize = 25;

#[derive(Debug, Error, PartialEq)]
pub enum KMeansError {
    #[error("k = {k} exceeds the number of points ({count})")]
    TooFewPoints { k: usize, count: usize },
    #[error("k and dim must be positive")]
    Empty,
    #[error("{len} values do not form rows of dim {dim}")]
    Shape { len: usize, dim: usize },
}

#[derive(Debug, Clone)]
pub struct KMeansResult<T> {
    /// `k` rows of `dim` values.
    pub centroids: Vec<T>,
    pub dim: usize,
    pub assignments: Vec<usize>,
    /// Sum of squared distances after the initial assignment and after
    /// every Lloyd iteration.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl<T: Scalar> KMeansResult<T> {
    pub fn k(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn centroid(&self, j: usize) -> &[T] {
        &self.centroids[j * self.dim..(j + 1) * self.dim]
    }

    pub fn inertia(&self) -> f64 {
        *self.inertia_history.last().unwrap_or(&0.0)
    }
}

/// Index of the closest centroid (lowest index on ties) and its squared distance.
pub fn nearest<T: Scalar>(point: &[T], centroids: &[T], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        let d = dist_sq(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign<T: Scalar>(points: &[T], centroids: &[T], dim: usize) -> (Vec<usize>, Vec<f64>) {
    points
        .par_chunks_exact(dim)
        .map(|p| nearest(p, centroids, dim))
        .unzip()
}

/// Seeds centroids from distinct points where possible; when the data has
/// fewer than `k` distinct rows, the remaining centroids repeat points.
fn init_centroids<T: Scalar>(points: &[T], dim: usize, k: usize, seed: u64) -> Vec<T> {
    let n = points.len() / dim;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let key = |i: usize| -> Vec<u64> {
        points[i * dim..(i + 1) * dim]
            .iter()
            .map(|v| {
                let x = v.to_f64_lossy();
                // +0 and -0 are the same point.
                if x == 0.0 { 0 } else { x.to_bits() }
            })
            .collect()
    };
    let mut seen = HashSet::new();
    let mut chosen = Vec::with_capacity(k);
    let mut dupes = Vec::new();
    for &i in &order {
        if chosen.len() == k {
            break;
        }
        if seen.insert(key(i)) {
            chosen.push(i);
        } else {
            dupes.push(i);
        }
    }
    chosen.extend(dupes.into_iter().take(k - chosen.len()));
    chosen.iter().flat_map(|&i| points[i * dim..(i + 1) * dim].iter().copied()).collect()
}

/// Fills empty clusters by moving the farthest point of the largest cluster.
/// Each move sets that point's distance to zero, so inertia cannot grow.
fn repair_empty<T: Scalar>(
    points: &[T],
    dim: usize,
    centroids: &mut [T],
    assignments: &mut [usize],
    dists: &mut [f64],
) {
    let k = centroids.len() / dim;
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignments.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else { return };
        let largest = (0..k).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a))).unwrap();
        let far = (0..assignments.len())
            .filter(|&i| assignments[i] == largest)
            .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
            .unwrap();
        if dists[far] <= 0.0 || sizes[largest] < 2 {
            // Every remaining point sits on its centroid; nothing to split.
            return;
        }
        centroids[empty * dim..(empty + 1) * dim].copy_from_slice(&points[far * dim..(far + 1) * dim]);
        assignments[far] = empty;
        dists[far] = 0.0;
    }
}

fn update_means<T: Scalar>(points: &[T], dim: usize, assignments: &[usize], centroids: &mut [T]) {
    let k = centroids.len() / dim;
    let mut sums = vec![0.0f64; k * dim];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.chunks_exact(dim).zip(assignments) {
        counts[a] += 1;
        for (s, &v) in sums[a * dim..(a + 1) * dim].iter_mut().zip(p) {
            *s += v.to_f64_lossy();
        }
    }
    for j in 0..k {
        if counts[j] == 0 {
            continue;
        }
        let c = counts[j] as f64;
        for (dst, &s) in centroids[j * dim..(j + 1) * dim].iter_mut().zip(&sums[j * dim..(j + 1) * dim]) {
            *dst = T::from_f64_lossy(s / c);
        }
    }
}

/// Runs at most `iters` Lloyd iterations from `k` seeded initial points,
/// stopping early once no assignment changes.
pub fn kmeans<T: Scalar>(
    points: &[T],
    dim: usize,
    k: usize,
    iters: usize,
    seed: u64,
) -> Result<KMeansResult<T>, KMeansError> {
    if k == 0 || dim == 0 {
        return Err(KMeansError::Empty);
    }
    if !points.len().is_multiple_of(dim) {
        return Err(KMeansError::Shape { len: points.len(), dim });
    }
    let n = points.len() / dim;
    if k > n {
        return Err(KMeansError::TooFewPoints { k, count: n });
    }
    let mut centroids = init_centroids(points, dim, k, seed);
    let (mut assignments, mut dists) = assign(points, &centroids, dim);
    repair_empty(points, dim, &mut centroids, &mut assignments, &mut dists);
    let mut history = vec![dists.iter().sum::<f64>()];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < iters {
        iterations += 1;
        update_means(points, dim, &assignments, &mut centroids);
        let (mut next, mut next_dists) = assign(points, &centroids, dim);
        repair_empty(points, dim, &mut centroids, &mut next, &mut next_dists);
        history.push(next_dists.iter().sum::<f64>());
        let unchanged = next == assignments;
        assignments = next;
        if unchanged {
            converged = true;
            break;
        }
    }
    Ok(KMeansResult { centroids, dim, assignments, inertia_history: history, iterations, converged })
}
