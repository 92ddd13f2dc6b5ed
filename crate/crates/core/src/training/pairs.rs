//! Fiber-pair sampling and pseudo-label lookup.

use rand::Rng;

use crate::error::{Error, Result};
use crate::functional::{pseudolabel_from_curves, EndpointCurves};
use crate::geometry::{mdf_distance, ResampledFiber};
use crate::seeded_rng;

/// A fiber pair with both pseudo-labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSample {
    pub i: usize,
    pub j: usize,
    /// Geometric distance in millimeters.
    pub s1: f64,
    /// Functional dissimilarity.
    pub s2: f64,
}

impl PairSample {
    pub fn new(i: usize, j: usize, s1: f64, s2: f64) -> Result<Self> {
        if i == j {
            return Err(Error::param(format!("pair ({i}, {j}) is not distinct")));
        }
        for (name, v) in [("s1", s1), ("s2", s2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        Ok(PairSample { i, j, s1, s2 })
    }

    pub fn compute(
        i: usize,
        j: usize,
        geo: &GeometricLabels,
        func: &FunctionalLabels,
    ) -> Result<Self> {
        PairSample::new(i, j, geo.label(i, j)?, func.label(i, j)?)
    }
}

/// Uniform ordered pairs of distinct indices, drawn with replacement.
pub fn sample_pairs(n_fibers: usize, n_pairs: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if n_fibers < 2 {
        return Err(Error::param(format!(
            "pair sampling needs at least 2 fibers, got {n_fibers}"
        )));
    }
    let mut rng = seeded_rng(seed, 0x9A_1125);
    Ok((0..n_pairs)
        .map(|_| {
            let i = rng.random_range(0..n_fibers);
            let mut j = rng.random_range(0..n_fibers - 1);
            if j >= i {
                j += 1;
            }
            (i, j)
        })
        .collect())
}

/// Pseudo-label source for one view.
pub trait PairLabels: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn label(&self, i: usize, j: usize) -> Result<f64>;
}

/// MDF distance between resampled fibers.
#[derive(Debug, Clone)]
pub struct GeometricLabels(pub Vec<ResampledFiber>);

impl PairLabels for GeometricLabels {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn label(&self, i: usize, j: usize) -> Result<f64> {
        let (a, b) = (self.0.get(i), self.0.get(j));
        match (a, b) {
            (Some(a), Some(b)) => mdf_distance(a, b),
            _ => Err(Error::param(format!("pair ({i}, {j}) out of range"))),
        }
    }
}

/// Endpoint-curve dissimilarity from precomputed SRVF curves.
#[derive(Debug, Clone)]
pub struct FunctionalLabels(pub Vec<EndpointCurves>);

impl PairLabels for FunctionalLabels {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn label(&self, i: usize, j: usize) -> Result<f64> {
        let (a, b) = (self.0.get(i), self.0.get(j));
        match (a, b) {
            (Some(a), Some(b)) => Ok(pseudolabel_from_curves(a, b)),
            _ => Err(Error::param(format!("pair ({i}, {j}) out of range"))),
        }
    }
}
