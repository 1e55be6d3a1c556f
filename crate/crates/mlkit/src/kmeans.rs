//! k-means with k-means++ seeding and Lloyd iterations, best of several
//! restarts by within-cluster MSE.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub centers: Vec<Vec<f64>>,
    /// Mean squared distance of training points to their assigned center.
    pub mse: f64,
    pub iterations: usize,
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Index of the nearest center; ties go to the lowest index.
pub fn nearest(centers: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.0 {
            best = (d, j);
        }
    }
    best.1
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn assign(&self, x: &[f64]) -> usize {
        nearest(&self.centers, x)
    }
}

fn assign_all(centers: &[Vec<f64>], x: &[Vec<f64>]) -> Vec<usize> {
    x.par_iter().map(|p| nearest(centers, p)).collect()
}

fn mse(centers: &[Vec<f64>], x: &[Vec<f64>], assign: &[usize]) -> f64 {
    let total: f64 = x.iter().zip(assign).map(|(p, &j)| sq_dist(p, &centers[j])).sum();
    total / x.len() as f64
}

fn plus_plus(x: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![x[rng.random_range(0..x.len())].clone()];
    let mut d2: Vec<f64> = x.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut idx = x.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            idx
        } else {
            rng.random_range(0..x.len())
        };
        centers.push(x[pick].clone());
        for (d, p) in d2.iter_mut().zip(x) {
            *d = d.min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }
    centers
}

fn lloyd(x: &[Vec<f64>], mut centers: Vec<Vec<f64>>) -> ClusterModel {
    let dim = x[0].len();
    let k = centers.len();
    let mut assign = assign_all(&centers, x);
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &j) in x.iter().zip(&assign) {
            counts[j] += 1;
            for (s, v) in sums[j].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // Reseed at the point farthest from its current center.
                let far = (0..x.len())
                    .max_by(|&a, &b| {
                        sq_dist(&x[a], &centers[assign[a]]).total_cmp(&sq_dist(&x[b], &centers[assign[b]])).then(b.cmp(&a))
                    })
                    .expect("non-empty data");
                centers[j] = x[far].clone();
                assign[far] = j;
            } else {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        let next = assign_all(&centers, x);
        if next == assign || iterations >= MAX_ITER {
            assign = next;
            // Centers must be the means of the final assignment.
            let mut sums = vec![vec![0.0; dim]; k];
            let mut counts = vec![0usize; k];
            for (p, &j) in x.iter().zip(&assign) {
                counts[j] += 1;
                for (s, v) in sums[j].iter_mut().zip(p) {
                    *s += v;
                }
            }
            for j in 0..k {
                if counts[j] > 0 {
                    centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
                }
            }
            break;
        }
        assign = next;
    }
    let mse = mse(&centers, x, &assign);
    ClusterModel { centers, mse, iterations }
}

/// Panics if `k == 0` or `x.len() < k`.
pub fn kmeans_fit(x: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> ClusterModel {
    assert!(k >= 1 && x.len() >= k, "k-means needs 1 <= k <= n");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inits: Vec<Vec<Vec<f64>>> = (0..restarts.max(1)).map(|_| plus_plus(x, k, &mut rng)).collect();
    let fits: Vec<ClusterModel> = inits.into_iter().map(|c| lloyd(x, c)).collect();
    fits.into_iter().reduce(|best, m| if m.mse < best.mse { m } else { best }).expect("at least one restart")
}

/// Largest violation of the two Lloyd fixed-point conditions: every point is
/// at least as close to its assigned center as to any other, and every
/// non-empty center is the mean of its points. Returns
/// `(assignment_gap, center_offset)`; both are 0 at an exact fixed point.
pub fn fixed_point_residual(model: &ClusterModel, x: &[Vec<f64>]) -> (f64, f64) {
    let assign = assign_all(&model.centers, x);
    let dim = x[0].len();
    let k = model.k();
    let mut gap: f64 = 0.0;
    for (p, &j) in x.iter().zip(&assign) {
        let own = sq_dist(p, &model.centers[j]);
        let best = model.centers.iter().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min);
        gap = gap.max(own - best);
    }
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &j) in x.iter().zip(&assign) {
        counts[j] += 1;
        for (s, v) in sums[j].iter_mut().zip(p) {
            *s += v;
        }
    }
    let mut offset: f64 = 0.0;
    for j in 0..k {
        if counts[j] > 0 {
            for (s, c) in sums[j].iter().zip(&model.centers[j]) {
                offset = offset.max((s / counts[j] as f64 - c).abs());
            }
        }
    }
    (gap, offset)
}

/// Per-k MSE and the largest positive-label fraction among clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDiagnostic {
    pub k: usize,
    pub mse: f64,
    pub max_concentration: f64,
}

pub fn cluster_diagnostics(
    x: &[Vec<f64>],
    labels: &[u8],
    k_range: impl IntoIterator<Item = usize>,
    restarts: usize,
    seed: u64,
) -> Vec<ClusterDiagnostic> {
    k_range
        .into_iter()
        .map(|k| {
            let model = kmeans_fit(x, k, restarts, seed);
            let mut pos = vec![0usize; k];
            let mut count = vec![0usize; k];
            for (p, &l) in x.iter().zip(labels) {
                let j = model.assign(p);
                count[j] += 1;
                pos[j] += usize::from(l == 1);
            }
            let max_concentration = (0..k)
                .filter(|&j| count[j] > 0)
                .map(|j| pos[j] as f64 / count[j] as f64)
                .fold(0.0, f64::max);
            ClusterDiagnostic { k, mse: model.mse, max_concentration }
        })
        .collect()
}
