#![allow(dead_code)]

pub mod gradcheck;
pub mod props;

use dmvfc::fiberset::{EndpointSignals, Fiber, FiberSet, Point3};
use dmvfc::geometry::ResampledFiber;
use dmvfc::seeded_rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    seeded_rng(seed, 0x7E57)
}

pub fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn random_points(rng: &mut impl Rng, n: usize, scale: f64) -> Vec<Point3> {
    (0..n)
        .map(|_| {
            [
                uniform(rng, -scale, scale),
                uniform(rng, -scale, scale),
                uniform(rng, -scale, scale),
            ]
        })
        .collect()
}

pub fn random_resampled(rng: &mut impl Rng, id: u64, n: usize) -> ResampledFiber {
    ResampledFiber {
        id,
        points: random_points(rng, n, 20.0),
    }
}

pub fn random_series(rng: &mut impl Rng, t: usize) -> Vec<f64> {
    (0..t).map(|_| uniform(rng, -2.0, 2.0)).collect()
}

pub fn random_signals(rng: &mut impl Rng, id: u64, t: usize) -> EndpointSignals {
    EndpointSignals::new(id, random_series(rng, t), random_series(rng, t)).unwrap()
}

/// Random row-stochastic matrix with entries bounded away from zero.
pub fn random_stochastic(rng: &mut impl Rng, n: usize, k: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let row: Vec<f64> = (0..k).map(|_| uniform(rng, 0.01, 1.0)).collect();
            let s: f64 = row.iter().sum();
            row.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

pub fn to_matrix(rows: &[Vec<f64>]) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_fn(rows.len(), rows[0].len(), |r, c| rows[r][c])
}

pub fn to_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| m.row(r).iter().copied().collect())
        .collect()
}

/// Small valid fiber set with random geometry, signals and labels.
pub fn random_fiberset(rng: &mut impl Rng, n: usize, t: usize, with_labels: bool) -> FiberSet {
    let fibers: Vec<Fiber> = (0..n)
        .map(|i| {
            let len = rng.random_range(2..8);
            Fiber::new(i as u64 * 3 + 1, random_points(rng, len, 50.0)).unwrap()
        })
        .collect();
    let signals = fibers
        .iter()
        .map(|f| random_signals(rng, f.id, t))
        .collect();
    let labels = with_labels.then(|| (0..n).map(|_| rng.random_range(0..3)).collect());
    FiberSet::new("random", fibers, Some(signals), labels).unwrap()
}
