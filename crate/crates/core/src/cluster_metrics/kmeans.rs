use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Output of a K-means run.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub assignments: Vec<usize>,
    pub centers: Matrix,
    /// `Σᵢ ‖zᵢ − μ_{assign(i)}‖²`
    pub inertia: f64,
    /// Inertia after initialization and after each Lloyd iteration.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

/// Stopping rule for [`kmeans_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub max_iters: usize,
    /// Stop once no center moves farther than this.
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            max_iters: 300,
            tol: 1e-6,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

// Nearest center; lowest index wins ties.
fn nearest(point: &[f64], centers: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for j in 0..centers.rows() {
        let d = sq_dist(point, centers.row_slice(j));
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_init(z: &Matrix, c: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = z.rows();
    let mut chosen = Vec::with_capacity(c);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(z.row_slice(i), z.row_slice(chosen[0])))
        .collect();
    while chosen.len() < c {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total has a positive weight")
        } else {
            // All remaining points coincide with a center.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(z.row_slice(i), z.row_slice(next)));
        }
    }
    Matrix::from_fn(c, z.cols(), |(k, j)| z[(chosen[k], j)])
}

fn assign(z: &Matrix, centers: &Matrix, labels: &mut [usize], dists: &mut [f64]) {
    for i in 0..z.rows() {
        let (j, d) = nearest(z.row_slice(i), centers);
        labels[i] = j;
        dists[i] = d;
    }
}

// Moves the point farthest from its center into each empty cluster.
fn repair_empty(z: &Matrix, centers: &mut Matrix, labels: &mut [usize], dists: &mut [f64]) {
    let c = centers.rows();
    loop {
        let mut counts = vec![0usize; c];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&n| n == 0) else {
            return;
        };
        let donor = (0..labels.len())
            .filter(|&i| counts[labels[i]] > 1)
            .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
            .expect("c <= N guarantees a cluster with two members");
        labels[donor] = empty;
        dists[donor] = 0.0;
        for j in 0..z.cols() {
            centers[(empty, j)] = z[(donor, j)];
        }
    }
}

fn means(z: &Matrix, labels: &[usize], c: usize) -> Matrix {
    let mut sums = Matrix::zeros(c, z.cols());
    let mut counts = vec![0usize; c];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for j in 0..z.cols() {
            sums[(l, j)] += z[(i, j)];
        }
    }
    for (k, &n) in counts.iter().enumerate() {
        for j in 0..z.cols() {
            sums[(k, j)] /= n as f64;
        }
    }
    sums
}

/// K-means++ seeding followed by Lloyd iterations with the default stopping rule.
pub fn kmeans(z: &Matrix, c: usize, seed: u64) -> Result<ClusterResult> {
    kmeans_with(z, c, seed, KMeansParams::default())
}

pub fn kmeans_with(z: &Matrix, c: usize, seed: u64, params: KMeansParams) -> Result<ClusterResult> {
    let n = z.rows();
    if c == 0 || c > n {
        return Err(Error::Contract(format!(
            "cannot form {c} clusters from {n} points"
        )));
    }
    if !z.is_finite() {
        return Err(Error::Contract("k-means input has non-finite entries".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_init(z, c, &mut rng);
    let mut labels = vec![0usize; n];
    let mut dists = vec![0.0; n];
    assign(z, &centers, &mut labels, &mut dists);
    repair_empty(z, &mut centers, &mut labels, &mut dists);
    let mut history = vec![dists.iter().sum()];

    let mut iterations = 0;
    while iterations < params.max_iters {
        iterations += 1;
        let updated = means(z, &labels, c);
        let shift = (0..c)
            .map(|k| sq_dist(updated.row_slice(k), centers.row_slice(k)).sqrt())
            .fold(0.0, f64::max);
        centers = updated;
        assign(z, &centers, &mut labels, &mut dists);
        repair_empty(z, &mut centers, &mut labels, &mut dists);
        history.push(dists.iter().sum());
        if shift < params.tol {
            break;
        }
    }

    Ok(ClusterResult {
        inertia: *history.last().expect("history is never empty"),
        assignments: labels,
        centers,
        inertia_history: history,
        iterations,
    })
}

/// Best of `restarts` seeded runs, ranked by `(inertia, seed)`.
pub fn kmeans_restarts(z: &Matrix, c: usize, seed: u64, restarts: usize) -> Result<ClusterResult> {
    let mut best: Option<ClusterResult> = None;
    for r in 0..restarts.max(1) as u64 {
        let run = kmeans(z, c, seed.wrapping_add(r))?;
        // Strict comparison keeps the lowest seed among equal inertias.
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}
