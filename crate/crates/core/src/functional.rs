//! Functional-signal kernels: downsampling for the encoder input, PCA
//! reduction, the scalar square-root velocity transform, the functional
//! pseudo-label and within-cluster Pearson correlation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index;

use crate::error::{Error, Result};
use crate::fiberset::EndpointSignals;
use crate::seeded_rng;

pub const DEFAULT_DOWNSAMPLED_LEN: usize = 600;
pub const DEFAULT_PCA_COMPONENTS: usize = 30;

/// Differences at or below this magnitude map to a zero SRVF value.
pub const SRVF_EPS: f64 = 1e-12;

/// Downsampled endpoint signals, one row per endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalInput {
    pub fiber_id: u64,
    pub matrix: DMatrix<f64>,
}

/// Keeps a sorted random subset of `target_len` time points. Both endpoint
/// rows share the same subset.
pub fn downsample_signals(
    s: &EndpointSignals,
    target_len: usize,
    seed: u64,
) -> Result<FunctionalInput> {
    let t = s.len();
    if target_len < 2 {
        return Err(Error::param(format!("target_len {target_len} < 2")));
    }
    if target_len > t {
        return Err(Error::param(format!(
            "target_len {target_len} exceeds signal length {t}"
        )));
    }
    let cols = downsample_indices(t, target_len, seed);
    let matrix = DMatrix::from_fn(2, target_len, |r, c| {
        let series = if r == 0 { &s.series_a } else { &s.series_b };
        series[cols[c]]
    });
    Ok(FunctionalInput {
        fiber_id: s.fiber_id,
        matrix,
    })
}

/// The sorted time indices `downsample_signals` keeps for `(len, target_len, seed)`.
pub fn downsample_indices(len: usize, target_len: usize, seed: u64) -> Vec<usize> {
    let mut rng = seeded_rng(seed, 0xD0_5A_AB1E);
    let mut cols = index::sample(&mut rng, len, target_len).into_vec();
    cols.sort_unstable();
    cols
}

/// Principal axes of a set of equal-length signals.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// One orthonormal row per component, ordered by explained variance.
    pub components: DMatrix<f64>,
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn signal_len(&self) -> usize {
        self.mean.len()
    }
}

/// Fits the top `n_components` principal axes of the mean-centered sample
/// covariance. Each axis is signed so its largest-magnitude entry is positive.
pub fn fit_pca(signals: &[&[f64]], n_components: usize) -> Result<PcaModel> {
    if n_components == 0 {
        return Err(Error::param("n_components must be at least 1"));
    }
    let n = signals.len();
    if n < n_components + 1 {
        return Err(Error::param(format!(
            "{n} signals cannot support {n_components} components (need n_components + 1)"
        )));
    }
    let t = signals[0].len();
    if let Some(s) = signals.iter().find(|s| s.len() != t) {
        return Err(Error::param(format!(
            "signal lengths differ: {} vs {t}",
            s.len()
        )));
    }
    if signals.iter().flat_map(|s| s.iter()).any(|v| !v.is_finite()) {
        return Err(Error::param("non-finite value in PCA input"));
    }

    let mut mean = vec![0.0; t];
    for s in signals {
        for (m, v) in mean.iter_mut().zip(s.iter()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered = DMatrix::from_fn(n, t, |r, c| signals[r][c] - mean[c]);
    let denom = (n - 1) as f64;

    // Eigenpairs of the smaller of the Gram and covariance matrices.
    let use_gram = n < t;
    let sym = if use_gram {
        &centered * centered.transpose()
    } else {
        centered.transpose() * &centered
    };
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let top = eig.eigenvalues[order[0]].max(0.0);
    let tol = top * 1e-10 * (n.max(t) as f64);
    let rank = if top <= 0.0 {
        0
    } else {
        order.iter().filter(|&&k| eig.eigenvalues[k] > tol).count()
    };
    if rank < n_components {
        return Err(Error::Rank {
            requested: n_components,
            rank,
        });
    }

    let mut components = DMatrix::zeros(n_components, t);
    let mut explained_variance = Vec::with_capacity(n_components);
    for (row, &k) in order.iter().take(n_components).enumerate() {
        let lambda = eig.eigenvalues[k];
        let u = eig.eigenvectors.column(k);
        let mut v: DVector<f64> = if use_gram {
            centered.transpose() * u / lambda.sqrt()
        } else {
            u.into_owned()
        };
        let norm = v.norm();
        v /= norm;
        let pivot = v.iter().copied().fold(0.0_f64, |best, x| {
            if x.abs() > best.abs() {
                x
            } else {
                best
            }
        });
        if pivot < 0.0 {
            v = -v;
        }
        components.row_mut(row).copy_from(&v.transpose());
        explained_variance.push(lambda / denom);
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
    })
}

/// `components · (signal − mean)`.
pub fn project_pca(model: &PcaModel, signal: &[f64]) -> Result<Vec<f64>> {
    if signal.len() != model.signal_len() {
        return Err(Error::param(format!(
            "signal length {} does not match PCA length {}",
            signal.len(),
            model.signal_len()
        )));
    }
    Ok((0..model.n_components())
        .map(|r| {
            model
                .components
                .row(r)
                .iter()
                .zip(signal.iter().zip(&model.mean))
                .map(|(c, (s, m))| c * (s - m))
                .sum()
        })
        .collect())
}

/// Square-root velocity values of a scalar curve on a unit-spaced grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SrvfCurve {
    pub values: Vec<f64>,
}

/// Forward differences `d_k` mapped to `d_k / sqrt(|d_k|)`, or 0 when
/// `|d_k| <= SRVF_EPS`.
pub fn srvf_transform(reduced: &[f64]) -> Result<SrvfCurve> {
    if reduced.len() < 2 {
        return Err(Error::param(format!(
            "SRVF needs at least 2 samples, got {}",
            reduced.len()
        )));
    }
    let values = reduced
        .windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            if d.abs() > SRVF_EPS {
                d / d.abs().sqrt()
            } else {
                0.0
            }
        })
        .collect();
    Ok(SrvfCurve { values })
}

/// SRVF curves of both endpoint signals of one fiber.
#[derive(Debug, Clone, PartialEq)]
pub struct EndpointCurves {
    pub a: SrvfCurve,
    pub b: SrvfCurve,
}

pub fn endpoint_curves(s: &EndpointSignals, model: &PcaModel) -> Result<EndpointCurves> {
    Ok(EndpointCurves {
        a: srvf_transform(&project_pca(model, &s.series_a)?)?,
        b: srvf_transform(&project_pca(model, &s.series_b)?)?,
    })
}

fn mse(x: &SrvfCurve, y: &SrvfCurve) -> f64 {
    let sum: f64 = x
        .values
        .iter()
        .zip(&y.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    sum / x.values.len() as f64
}

/// Functional pseudo-label from precomputed endpoint curves: the smaller of
/// the two endpoint pairings' mean MSE.
pub fn pseudolabel_from_curves(a: &EndpointCurves, b: &EndpointCurves) -> f64 {
    let straight = (mse(&a.a, &b.a) + mse(&a.b, &b.b)) / 2.0;
    let crossed = (mse(&a.a, &b.b) + mse(&a.b, &b.a)) / 2.0;
    straight.min(crossed)
}

pub fn functional_pseudolabel(
    a: &EndpointSignals,
    b: &EndpointSignals,
    model: &PcaModel,
) -> Result<f64> {
    Ok(pseudolabel_from_curves(
        &endpoint_curves(a, model)?,
        &endpoint_curves(b, model)?,
    ))
}

struct Centered {
    values: Vec<f64>,
    sum_sq: f64,
}

fn center(series: &[f64], fiber_id: u64) -> Result<Centered> {
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let values: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let sum_sq: f64 = values.iter().map(|v| v * v).sum();
    if sum_sq <= 0.0 {
        return Err(Error::DegenerateSignal(format!(
            "fiber {fiber_id} has a constant endpoint signal"
        )));
    }
    Ok(Centered { values, sum_sq })
}

fn corr(x: &Centered, y: &Centered) -> f64 {
    let sxy: f64 = x.values.iter().zip(&y.values).map(|(a, b)| a * b).sum();
    (sxy / (x.sum_sq * y.sum_sq).sqrt()).clamp(-1.0, 1.0)
}

/// Pairwise best-pairing correlation matrix of a cluster.
fn pair_correlations(cluster: &[&EndpointSignals]) -> Result<Vec<Vec<f64>>> {
    if cluster.len() < 2 {
        return Err(Error::param(format!(
            "Pearson needs at least 2 fibers, got {}",
            cluster.len()
        )));
    }
    let t = cluster[0].len();
    if let Some(s) = cluster.iter().find(|s| s.len() != t) {
        return Err(Error::param(format!(
            "signal length mismatch: fiber {} has {}, expected {t}",
            s.fiber_id,
            s.len()
        )));
    }
    let centered = cluster
        .iter()
        .map(|s| Ok((center(&s.series_a, s.fiber_id)?, center(&s.series_b, s.fiber_id)?)))
        .collect::<Result<Vec<_>>>()?;
    let n = cluster.len();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let (ia, ib) = &centered[i];
            let (ja, jb) = &centered[j];
            let straight = (corr(ia, ja) + corr(ib, jb)) / 2.0;
            let crossed = (corr(ia, jb) + corr(ib, ja)) / 2.0;
            let best = straight.max(crossed);
            out[i][j] = best;
            out[j][i] = best;
        }
    }
    Ok(out)
}

/// Mean over fiber pairs of the endpoint correlation, each pair taking the
/// endpoint pairing with the larger mean correlation.
pub fn cluster_pearson(cluster: &[&EndpointSignals]) -> Result<f64> {
    let m = pair_correlations(cluster)?;
    let n = cluster.len();
    let mut sum = 0.0;
    for (i, row) in m.iter().enumerate() {
        for v in &row[i + 1..] {
            sum += v;
        }
    }
    Ok(sum / (n * (n - 1) / 2) as f64)
}

/// Per-fiber mean best-pairing correlation with the other cluster members.
pub fn fiber_coherence(cluster: &[&EndpointSignals]) -> Result<Vec<f64>> {
    let m = pair_correlations(cluster)?;
    let n = cluster.len();
    Ok(m.iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, v)| v)
                .sum::<f64>()
                / (n - 1) as f64
        })
        .collect())
}
