//! Lloyd's K-Means with k-means++ seeding and independent restarts.
//!
//! Restart `r` draws from `ChaCha8Rng::seed_from_u64(seed + r)`. Restarts run
//! in parallel; the winner is the restart with the lowest final objective,
//! lowest restart index on ties, so the result does not depend on the number
//! of worker threads.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OscError, Result};
use crate::seed::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Stop once `(prev - obj) <= tol * prev`.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iter: 300,
            tol: 1e-6,
            restarts: 10,
            seed,
        }
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(OscError::InvalidConfig(format!(
                "k must be at least 2, got {}",
                self.k
            )));
        }
        if self.max_iter == 0 || self.restarts == 0 {
            return Err(OscError::InvalidConfig(
                "max_iter and restarts must be positive".into(),
            ));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(OscError::InvalidConfig(format!(
                "tol must be a non-negative number, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterResult {
    /// Cluster index in `0..k` for every point.
    pub assignments: Vec<usize>,
    /// k x dim centroid matrix.
    #[serde(skip)]
    pub centroids: DMatrix<f64>,
    /// Final sum of squared distances to the assigned centroids.
    pub objective: f64,
    /// Objective after every completed iteration of the winning restart.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub seed_used: u64,
    pub restart_index: usize,
}

/// Row-major copy of the input for cache-friendly distance loops.
struct Points {
    data: Vec<f64>,
    n: usize,
    dim: usize,
}

impl Points {
    fn new(m: &DMatrix<f64>) -> Self {
        let (n, dim) = m.shape();
        let mut data = Vec::with_capacity(n * dim);
        for i in 0..n {
            data.extend(m.row(i).iter().copied());
        }
        Self { data, n, dim }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn kmeans(points: &DMatrix<f64>, cfg: &KMeansConfig) -> Result<ClusterResult> {
    cfg.validate()?;
    let n = points.nrows();
    if n < cfg.k {
        return Err(OscError::TooFewPoints { points: n, k: cfg.k });
    }
    for row in 0..n {
        for col in 0..points.ncols() {
            if !points[(row, col)].is_finite() {
                return Err(OscError::NonFinite { row, col });
            }
        }
    }
    let pts = Points::new(points);

    let runs: Vec<ClusterResult> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| lloyd(&pts, cfg, r))
        .collect();

    let best = runs
        .into_iter()
        .reduce(|best, cand| {
            if cand.objective < best.objective {
                cand
            } else {
                best
            }
        })
        .expect("at least one restart");
    Ok(best)
}

/// Sum of squared distances of each point to the mean of its cluster.
pub fn within_cluster_ss(points: &DMatrix<f64>, assignments: &[usize], k: usize) -> f64 {
    let pts = Points::new(points);
    let centroids = cluster_means(&pts, assignments, k);
    (0..pts.n)
        .map(|i| {
            let c = assignments[i];
            sq_dist(pts.row(i), &centroids[c * pts.dim..(c + 1) * pts.dim])
        })
        .sum()
}

fn cluster_means(pts: &Points, assignments: &[usize], k: usize) -> Vec<f64> {
    let dim = pts.dim;
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (i, &c) in assignments.iter().enumerate() {
        counts[c] += 1;
        for (s, x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(pts.row(i)) {
            *s += x;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            let inv = 1.0 / counts[c] as f64;
            for s in &mut sums[c * dim..(c + 1) * dim] {
                *s *= inv;
            }
        }
    }
    sums
}

fn seed_plus_plus(pts: &Points, k: usize, rng: &mut impl Rng) -> Vec<f64> {
    let dim = pts.dim;
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..pts.n);
    centroids.extend_from_slice(pts.row(first));

    let mut d2: Vec<f64> = (0..pts.n).map(|i| sq_dist(pts.row(i), pts.row(first))).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                chosen = Some(i);
                if acc > target {
                    break;
                }
            }
            chosen.expect("positive total weight")
        } else {
            rng.random_range(0..pts.n)
        };
        let new = pts.row(pick);
        centroids.extend_from_slice(new);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(pts.row(i), new));
        }
    }
    centroids
}

fn lloyd(pts: &Points, cfg: &KMeansConfig, restart: usize) -> ClusterResult {
    let k = cfg.k;
    let dim = pts.dim;
    let seed = cfg.seed.wrapping_add(restart as u64);
    let mut rng = rng_from_seed(seed);
    let mut centroids = seed_plus_plus(pts, k, &mut rng);

    let mut assignments = vec![usize::MAX; pts.n];
    let mut dist = vec![0.0; pts.n];
    let mut counts = vec![0usize; k];
    let mut trace = Vec::new();
    let mut converged = false;

    for _ in 0..cfg.max_iter {
        let mut changed = false;
        counts.iter_mut().for_each(|c| *c = 0);
        for i in 0..pts.n {
            let x = pts.row(i);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let d = sq_dist(x, &centroids[c * dim..(c + 1) * dim]);
                // strict comparison: ties go to the lowest centroid index
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assignments[i] != best {
                changed = true;
                assignments[i] = best;
            }
            dist[i] = best_d;
            counts[best] += 1;
        }

        for empty in 0..k {
            if counts[empty] > 0 {
                continue;
            }
            let mut far = None;
            let mut far_d = f64::NEG_INFINITY;
            for i in 0..pts.n {
                if counts[assignments[i]] > 1 && dist[i] > far_d {
                    far_d = dist[i];
                    far = Some(i);
                }
            }
            let i = far.expect("n >= k leaves a cluster with two points");
            counts[assignments[i]] -= 1;
            assignments[i] = empty;
            counts[empty] = 1;
            dist[i] = 0.0;
            centroids[empty * dim..(empty + 1) * dim].copy_from_slice(pts.row(i));
            changed = true;
        }

        centroids = cluster_means(pts, &assignments, k);
        let objective: f64 = (0..pts.n)
            .map(|i| {
                let c = assignments[i];
                sq_dist(pts.row(i), &centroids[c * dim..(c + 1) * dim])
            })
            .sum();

        let prev = trace.last().copied();
        trace.push(objective);
        let stop = match prev {
            Some(prev) => !changed || prev - objective <= cfg.tol * prev,
            None => objective == 0.0,
        };
        if stop {
            converged = true;
            break;
        }
    }

    ClusterResult {
        assignments,
        centroids: DMatrix::from_row_slice(k, dim, &centroids),
        objective: *trace.last().expect("max_iter >= 1"),
        iterations: trace.len(),
        objective_trace: trace,
        converged,
        seed_used: seed,
        restart_index: restart,
    }
}
