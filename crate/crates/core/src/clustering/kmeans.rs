//! Lloyd's algorithm with k-means++ seeding and best-of-restarts selection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop once no center moves farther than this.
    pub tol: f64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig {
            k,
            seed,
            restarts: 10,
            max_iter: 300,
            tol: 1e-6,
        }
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }
}

/// One Lloyd run from one seeding.
#[derive(Debug, Clone)]
pub struct LloydRun {
    pub centers: Vec<Point>,
    pub labels: Vec<usize>,
    /// Total squared error after the seeding assignment and after every iteration.
    pub history: Vec<f64>,
    pub iterations: usize,
}

impl LloydRun {
    pub fn sse(&self) -> f64 {
        *self.history.last().expect("history is never empty")
    }
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub centers: Vec<Point>,
    pub labels: Vec<usize>,
    /// Total within-cluster squared error divided by the number of points.
    pub avg_sq_error: f64,
    /// Total squared error of every restart, in restart order.
    pub restart_sse: Vec<f64>,
    pub best_restart: usize,
}

#[inline]
pub(crate) fn sq_dist(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Number of distinct points, comparing bit patterns.
pub fn distinct_count(points: &[Point]) -> usize {
    let mut keys: Vec<[u64; 3]> = points
        .iter()
        .map(|p| p.map(|v| (v + 0.0).to_bits()))
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

fn nearest(p: &Point, centers: &[Point]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn assign(points: &[Point], centers: &[Point], labels: &mut [usize], dists: &mut [f64]) -> f64 {
    let mut sse = 0.0;
    for ((p, l), d) in points.iter().zip(labels.iter_mut()).zip(dists.iter_mut()) {
        let (i, dd) = nearest(p, centers);
        *l = i;
        *d = dd;
        sse += dd;
    }
    sse
}

/// k-means++: first center uniform, the rest drawn proportional to squared
/// distance from the nearest chosen center.
pub fn kmeans_plus_plus(points: &[Point], k: usize, rng: &mut impl Rng) -> Vec<Point> {
    let mut centers = Vec::with_capacity(k);
    centers.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, d) in d2.iter().enumerate() {
                if *d > 0.0 {
                    if u < *d {
                        pick = Some(i);
                        break;
                    }
                    u -= d;
                }
            }
            pick.unwrap_or_else(|| d2.iter().rposition(|d| *d > 0.0).expect("total > 0"))
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[idx];
        for (p, d) in points.iter().zip(d2.iter_mut()) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

/// Runs Lloyd iterations from the given centers until the assignment stops
/// changing, no center moves more than `tol`, or `max_iter` is reached.
pub fn lloyd(points: &[Point], mut centers: Vec<Point>, max_iter: usize, tol: f64) -> LloydRun {
    let n = points.len();
    let k = centers.len();
    let mut labels = vec![0; n];
    let mut dists = vec![0.0; n];
    let mut history = vec![assign(points, &centers, &mut labels, &mut dists)];
    let mut next_labels = vec![0; n];
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let mut sums = vec![[0.0; 3]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            for j in 0..3 {
                sums[l][j] += p[j];
            }
            counts[l] += 1;
        }
        let mut new_centers: Vec<Point> = (0..k)
            .map(|c| {
                if counts[c] == 0 {
                    centers[c]
                } else {
                    sums[c].map(|s| s / counts[c] as f64)
                }
            })
            .collect();

        // Empty clusters restart at the points farthest from their centers.
        let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
        if !empty.is_empty() {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| dists[b].total_cmp(&dists[a]).then(a.cmp(&b)));
            for (c, &p) in empty.iter().zip(&order) {
                new_centers[*c] = points[p];
            }
        }

        let movement = centers
            .iter()
            .zip(&new_centers)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centers = new_centers;
        let sse = assign(points, &centers, &mut next_labels, &mut dists);
        history.push(sse);
        let fixpoint = next_labels == labels;
        std::mem::swap(&mut labels, &mut next_labels);
        if fixpoint || movement < tol {
            break;
        }
    }

    LloydRun {
        centers,
        labels,
        history,
        iterations,
    }
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

/// Best of `config.restarts` seeded Lloyd runs by total squared error.
pub fn kmeans_fit(points: &[Point], config: &KMeansConfig) -> Result<KMeansFit> {
    if config.k == 0 {
        return Err(Error::InvalidK);
    }
    let distinct = distinct_count(points);
    if distinct < config.k {
        return Err(Error::TooFewDistinctPoints {
            k: config.k,
            distinct,
        });
    }
    let restarts = config.restarts.max(1);
    let runs: Vec<LloydRun> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = restart_rng(config.seed, r);
            let init = kmeans_plus_plus(points, config.k, &mut rng);
            lloyd(points, init, config.max_iter, config.tol)
        })
        .collect();
    let restart_sse: Vec<f64> = runs.iter().map(LloydRun::sse).collect();
    let best_restart =
        restart_sse.iter().enumerate().fold(
            0,
            |best, (i, s)| if *s < restart_sse[best] { i } else { best },
        );
    let best = runs
        .into_iter()
        .nth(best_restart)
        .expect("at least one run");
    Ok(KMeansFit {
        avg_sq_error: best.sse() / points.len() as f64,
        centers: best.centers,
        labels: best.labels,
        restart_sse,
        best_restart,
    })
}
