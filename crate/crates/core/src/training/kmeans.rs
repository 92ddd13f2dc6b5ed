//! Lloyd's k-means with greedy k-means++ seeding.

use nalgebra::DMatrix;
use rand::Rng;

use crate::encoder::EmbeddingBatch;
use crate::error::{Error, Result};
use crate::seeded_rng;

pub const KMEANS_MAX_ITERS: usize = 100;
/// Stop when no centroid moves farther than this.
pub const KMEANS_TOL: f64 = 1e-6;
const N_INIT: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// `K × D`.
    pub centroids: DMatrix<f64>,
    pub labels: Vec<usize>,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(data: &DMatrix<f64>, i: usize, c: &DMatrix<f64>, j: usize) -> f64 {
    (0..data.ncols())
        .map(|d| (data[(i, d)] - c[(j, d)]).powi(2))
        .sum()
}

fn copy_row(dst: &mut DMatrix<f64>, j: usize, src: &DMatrix<f64>, i: usize) {
    for d in 0..src.ncols() {
        dst[(j, d)] = src[(i, d)];
    }
}

/// Index drawn with probability proportional to `weights`.
fn weighted_pick(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return rng.random_range(0..weights.len());
    }
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Each new seed is the best (lowest resulting potential) of a few
/// D²-weighted candidates.
fn greedy_seed(data: &DMatrix<f64>, k: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let n = data.nrows();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut centroids = DMatrix::zeros(k, data.ncols());
    let first = rng.random_range(0..n);
    copy_row(&mut centroids, 0, data, first);
    let mut closest: Vec<f64> = (0..n).map(|i| sq_dist(data, i, &centroids, 0)).collect();
    for j in 1..k {
        let mut best: Option<(f64, Vec<f64>, usize)> = None;
        for _ in 0..trials {
            let cand = weighted_pick(&closest, rng);
            let updated: Vec<f64> = (0..n)
                .map(|i| {
                    let d: f64 = (0..data.ncols())
                        .map(|d| (data[(i, d)] - data[(cand, d)]).powi(2))
                        .sum();
                    d.min(closest[i])
                })
                .collect();
            let pot: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|(p, _, _)| pot < *p) {
                best = Some((pot, updated, cand));
            }
        }
        let (_, updated, cand) = best.expect("at least one trial");
        copy_row(&mut centroids, j, data, cand);
        closest = updated;
    }
    centroids
}

fn assign(data: &DMatrix<f64>, centroids: &DMatrix<f64>) -> (Vec<usize>, Vec<f64>) {
    (0..data.nrows())
        .map(|i| {
            let mut best = 0;
            let mut best_d = sq_dist(data, i, centroids, 0);
            for j in 1..centroids.nrows() {
                let d = sq_dist(data, i, centroids, j);
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            (best, best_d)
        })
        .unzip()
}

fn lloyd(data: &DMatrix<f64>, mut centroids: DMatrix<f64>) -> KMeansResult {
    let (n, dim) = data.shape();
    let k = centroids.nrows();
    let mut iterations = 0;
    for _ in 0..KMEANS_MAX_ITERS {
        iterations += 1;
        let (labels, dists) = assign(data, &centroids);
        let mut sums = DMatrix::<f64>::zeros(k, dim);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for d in 0..dim {
                sums[(labels[i], d)] += data[(i, d)];
            }
        }
        let mut next = centroids.clone();
        let mut taken = vec![false; n];
        for j in 0..k {
            if counts[j] > 0 {
                for d in 0..dim {
                    next[(j, d)] = sums[(j, d)] / counts[j] as f64;
                }
            } else {
                // Empty cluster: move it to the worst-fit point not yet used.
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .unwrap_or(0);
                taken[far] = true;
                copy_row(&mut next, j, data, far);
            }
        }
        let shift = (0..k)
            .map(|j| {
                (0..dim)
                    .map(|d| (next[(j, d)] - centroids[(j, d)]).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        centroids = next;
        if shift <= KMEANS_TOL {
            break;
        }
    }
    let (labels, dists) = assign(data, &centroids);
    KMeansResult {
        centroids,
        labels,
        inertia: dists.iter().sum(),
        iterations,
    }
}

/// Best of several seeded restarts on the rows of `data`.
pub fn kmeans(data: &DMatrix<f64>, k: usize, seed: u64) -> Result<KMeansResult> {
    let n = data.nrows();
    if k == 0 {
        return Err(Error::param("k-means needs k >= 1"));
    }
    if n < k {
        return Err(Error::param(format!("k-means needs N >= K, got N={n}, K={k}")));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("k-means input has non-finite values"));
    }
    let mut best: Option<KMeansResult> = None;
    for restart in 0..N_INIT {
        let mut rng = seeded_rng(seed, 0x4B_4D45_414E ^ restart as u64);
        let res = lloyd(data, greedy_seed(data, k, &mut rng));
        if best.as_ref().is_none_or(|b| res.inertia < b.inertia) {
            best = Some(res);
        }
    }
    Ok(best.expect("N_INIT > 0"))
}

/// K-means centroids (`K × D`) of an embedding batch.
pub fn init_centroids(z: &EmbeddingBatch, k: usize, seed: u64) -> Result<DMatrix<f64>> {
    Ok(kmeans(&z.matrix, k, seed)?.centroids)
}
