//! Student's-t soft assignment, sharpened targets and the KL clustering term.

use nalgebra::DMatrix;

use crate::encoder::EmbeddingBatch;
use crate::error::{Error, Result};

/// Row-stochastic `N × K` cluster membership probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftAssignment {
    q: DMatrix<f64>,
}

impl SoftAssignment {
    /// Validates that every entry lies in `(0, 1]` and rows sum to 1 within 1e-9.
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        for r in 0..q.nrows() {
            let row = q.row(r);
            if row.iter().any(|&v| !(v > 0.0 && v <= 1.0)) {
                return Err(Error::param(format!("row {r} has entries outside (0, 1]")));
            }
            let s: f64 = row.sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::param(format!("row {r} sums to {s}")));
            }
        }
        Ok(SoftAssignment { q })
    }

    #[cfg(test)]
    pub(crate) fn from_matrix_unchecked(q: DMatrix<f64>) -> Self {
        SoftAssignment { q }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn n_rows(&self) -> usize {
        self.q.nrows()
    }

    pub fn n_clusters(&self) -> usize {
        self.q.ncols()
    }

    /// Column sums `f_j = Σ_i q_ij`.
    pub fn cluster_mass(&self) -> Vec<f64> {
        (0..self.q.ncols()).map(|j| self.q.column(j).sum()).collect()
    }

    /// Row argmax, ties to the lower cluster index.
    pub fn hard_labels(&self) -> Vec<usize> {
        (0..self.q.nrows())
            .map(|r| {
                let row = self.q.row(r);
                let mut best = 0;
                for j in 1..row.len() {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

fn kernel_row(z: &[f64], centroids: &DMatrix<f64>) -> Vec<f64> {
    (0..centroids.nrows())
        .map(|j| {
            let d2: f64 = z
                .iter()
                .enumerate()
                .map(|(c, v)| (v - centroids[(j, c)]).powi(2))
                .sum();
            1.0 / (1.0 + d2)
        })
        .collect()
}

/// `q_ij ∝ (1 + ‖z_i − μ_j‖²)^{-1}` for raw embedding rows.
pub fn soft_assign_rows(rows: &[Vec<f64>], centroids: &DMatrix<f64>) -> Result<SoftAssignment> {
    let k = centroids.nrows();
    if k == 0 {
        return Err(Error::param("no centroids"));
    }
    let mut q = DMatrix::zeros(rows.len(), k);
    for (i, z) in rows.iter().enumerate() {
        if z.len() != centroids.ncols() {
            return Err(Error::param(format!(
                "embedding dim {} does not match centroid dim {}",
                z.len(),
                centroids.ncols()
            )));
        }
        let kr = kernel_row(z, centroids);
        let s: f64 = kr.iter().sum();
        for (j, v) in kr.iter().enumerate() {
            q[(i, j)] = v / s;
        }
    }
    Ok(SoftAssignment { q })
}

/// Student's-t soft assignment of embeddings to centroids (`K × D`).
pub fn soft_assign(z: &EmbeddingBatch, centroids: &DMatrix<f64>) -> Result<SoftAssignment> {
    let rows: Vec<Vec<f64>> = (0..z.len())
        .map(|i| z.matrix.row(i).iter().copied().collect())
        .collect();
    soft_assign_rows(&rows, centroids)
}

/// Sharpened target `p_ij ∝ q_ij² / f_j` with `f_j = Σ_i q_ij`.
pub fn target_distribution(q: &SoftAssignment) -> Result<SoftAssignment> {
    let mass = q.cluster_mass();
    if let Some((j, &m)) = mass.iter().enumerate().find(|(_, &m)| m <= 0.0) {
        return Err(Error::DegenerateCluster { cluster: j, mass: m });
    }
    let (n, k) = q.q.shape();
    let mut p = DMatrix::zeros(n, k);
    for i in 0..n {
        let mut s = 0.0;
        for j in 0..k {
            let v = q.q[(i, j)] * q.q[(i, j)] / mass[j];
            p[(i, j)] = v;
            s += v;
        }
        for j in 0..k {
            p[(i, j)] /= s;
        }
    }
    Ok(SoftAssignment { q: p })
}

/// `Σ_i Σ_j p_ij log(p_ij / q_ij)` with `0 log 0 = 0`.
pub fn kl_clustering_loss(p: &SoftAssignment, q: &SoftAssignment) -> Result<f64> {
    if p.q.shape() != q.q.shape() {
        return Err(Error::param(format!(
            "shape mismatch {:?} vs {:?}",
            p.q.shape(),
            q.q.shape()
        )));
    }
    let mut total = 0.0;
    for i in 0..p.q.nrows() {
        for j in 0..p.q.ncols() {
            let pv = p.q[(i, j)];
            if pv == 0.0 {
                continue;
            }
            let qv = q.q[(i, j)];
            if qv <= 0.0 {
                return Err(Error::InfiniteLoss { row: i, col: j });
            }
            total += pv * (pv / qv).ln();
        }
    }
    Ok(total)
}

/// KL value and its gradients with respect to embeddings and centroids,
/// for fixed targets.
#[derive(Debug, Clone)]
pub struct KlGradients {
    pub loss: f64,
    /// One gradient row per embedding row.
    pub dz: Vec<Vec<f64>>,
    pub dcentroids: DMatrix<f64>,
}

/// Gradient of `Σ_i KL(p_i ‖ q_i)` where `q` is the soft assignment of `rows`.
///
/// With `k_ij = (1 + ‖z_i − μ_j‖²)^{-1}` and `w_ij = q_ij Σ_j' p_ij' − p_ij`:
/// `∂L/∂z_i = −2 Σ_j w_ij k_ij (z_i − μ_j)` and
/// `∂L/∂μ_j = 2 Σ_i w_ij k_ij (z_i − μ_j)`.
pub fn kl_gradients(
    rows: &[Vec<f64>],
    centroids: &DMatrix<f64>,
    targets: &[Vec<f64>],
) -> Result<KlGradients> {
    let (k, d) = centroids.shape();
    if targets.len() != rows.len() {
        return Err(Error::param("targets and embeddings differ in length"));
    }
    let mut loss = 0.0;
    let mut dz = Vec::with_capacity(rows.len());
    let mut dcentroids = DMatrix::zeros(k, d);
    for (z, p) in rows.iter().zip(targets) {
        if z.len() != d || p.len() != k {
            return Err(Error::param("dimension mismatch in KL gradient"));
        }
        let kr = kernel_row(z, centroids);
        let s: f64 = kr.iter().sum();
        let p_sum: f64 = p.iter().sum();
        let mut g = vec![0.0; d];
        for j in 0..k {
            let q = kr[j] / s;
            if p[j] > 0.0 {
                loss += p[j] * (p[j] / q).ln();
            }
            let w = q * p_sum - p[j];
            let coef = 2.0 * w * kr[j];
            for c in 0..d {
                let diff = z[c] - centroids[(j, c)];
                g[c] -= coef * diff;
                dcentroids[(j, c)] += coef * diff;
            }
        }
        dz.push(g);
    }
    Ok(KlGradients {
        loss,
        dz,
        dcentroids,
    })
}
