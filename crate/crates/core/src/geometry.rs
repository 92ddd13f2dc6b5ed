//! Geometric streamline kernels.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fiberset::{Fiber, Point3};

/// Points per fiber fed to the geometric encoder.
pub const DEFAULT_NUM_POINTS: usize = 25;

/// A fiber resampled to a fixed number of equally spaced points.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampledFiber {
    pub id: u64,
    pub points: Vec<Point3>,
}

impl ResampledFiber {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        points.reverse();
        ResampledFiber { id: self.id, points }
    }
}

#[inline]
fn dist(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Resamples `f` to `n_points` positions equally spaced in arc length along
/// its piecewise-linear trajectory. Endpoints are copied exactly.
pub fn resample(f: &Fiber, n_points: usize) -> Result<ResampledFiber> {
    if n_points < 2 {
        return Err(Error::param(format!("n_points = {n_points}, need at least 2")));
    }
    f.validate()?;
    let pts = &f.points;
    let mut cum = Vec::with_capacity(pts.len());
    cum.push(0.0);
    for w in pts.windows(2) {
        let last = *cum.last().unwrap();
        cum.push(last + dist(&w[0], &w[1]));
    }
    let total = *cum.last().unwrap();
    if total <= 0.0 {
        return Err(Error::Degenerate(format!("fiber {} has zero length", f.id)));
    }

    let mut out = Vec::with_capacity(n_points);
    out.push(pts[0]);
    let mut seg = 0;
    for i in 1..n_points - 1 {
        let target = total * i as f64 / (n_points - 1) as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < target {
            seg += 1;
        }
        let seg_len = cum[seg + 1] - cum[seg];
        let t = if seg_len > 0.0 {
            ((target - cum[seg]) / seg_len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let (a, b) = (pts[seg], pts[seg + 1]);
        out.push([
            a[0] + t * (b[0] - a[0]),
            a[1] + t * (b[1] - a[1]),
            a[2] + t * (b[2] - a[2]),
        ]);
    }
    out.push(pts[pts.len() - 1]);
    Ok(ResampledFiber {
        id: f.id,
        points: out,
    })
}

/// Direct and flipped mean point distances.
fn direct_flip(a: &[Point3], b: &[Point3]) -> (f64, f64) {
    let n = a.len();
    let mut direct = 0.0;
    let mut flipped = 0.0;
    for k in 0..n {
        direct += dist(&a[k], &b[k]);
        flipped += dist(&a[k], &b[n - 1 - k]);
    }
    (direct / n as f64, flipped / n as f64)
}

/// Minimum average direct-flip distance between two equal-length fibers.
pub fn mdf_distance(a: &ResampledFiber, b: &ResampledFiber) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::param(format!(
            "mdf_distance needs equal non-zero point counts, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (d, f) = direct_flip(&a.points, &b.points);
    Ok(d.min(f))
}

fn check_uniform(fibers: &[ResampledFiber]) -> Result<usize> {
    let n = fibers
        .first()
        .ok_or_else(|| Error::param("empty fiber list"))?
        .len();
    if let Some(f) = fibers.iter().find(|f| f.len() != n) {
        return Err(Error::param(format!(
            "fiber {} has {} points, expected {n}",
            f.id,
            f.len()
        )));
    }
    Ok(n)
}

/// Symmetric matrix of direct-flip distances with a zero diagonal.
pub fn pairwise_mdf(fibers: &[ResampledFiber]) -> Result<DMatrix<f64>> {
    check_uniform(fibers)?;
    let n = fibers.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| {
                    let (d, f) = direct_flip(&fibers[i].points, &fibers[j].points);
                    d.min(f)
                })
                .collect()
        })
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + 1 + off;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Mean direct-flip distance over all unordered pairs of a cluster; 0 for a
/// singleton.
pub fn alpha_metric(cluster: &[ResampledFiber]) -> Result<f64> {
    check_uniform(cluster)?;
    let n = cluster.len();
    if n == 1 {
        return Ok(0.0);
    }
    let m = pairwise_mdf(cluster)?;
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += m[(i, j)];
        }
    }
    Ok(sum / (n * (n - 1) / 2) as f64)
}

/// Result of a QuickBundles pass.
#[derive(Debug, Clone, PartialEq)]
pub struct QbModel {
    pub threshold: f64,
    pub centroids: Vec<ResampledFiber>,
    pub member_ids: Vec<Vec<u64>>,
}

impl QbModel {
    pub fn n_clusters(&self) -> usize {
        self.centroids.len()
    }

    /// Cluster index of each fiber id in `ids`.
    pub fn labels_for(&self, ids: &[u64]) -> Result<Vec<usize>> {
        let mut lookup = std::collections::HashMap::new();
        for (c, members) in self.member_ids.iter().enumerate() {
            for &id in members {
                lookup.insert(id, c);
            }
        }
        ids.iter()
            .map(|id| {
                lookup
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::param(format!("fiber {id} not in QuickBundles model")))
            })
            .collect()
    }
}

/// Single-pass QuickBundles clustering with direct-flip distance.
///
/// Each fiber joins the nearest centroid when the distance is below
/// `threshold`, aligned to the centroid's orientation; otherwise it starts a
/// new cluster. Centroids are running means of their aligned members.
pub fn quickbundles(fibers: &[ResampledFiber], threshold: f64) -> Result<QbModel> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::param(format!("threshold {threshold} must be positive")));
    }
    let n_points = check_uniform(fibers)?;

    let mut sums: Vec<Vec<Point3>> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    let mut means: Vec<Vec<Point3>> = Vec::new();
    let mut member_ids: Vec<Vec<u64>> = Vec::new();

    for f in fibers {
        let mut best: Option<(usize, f64, bool)> = None;
        for (c, mean) in means.iter().enumerate() {
            let (d, fl) = direct_flip(&f.points, mean);
            let (dmin, flip) = if fl < d { (fl, true) } else { (d, false) };
            if best.is_none_or(|(_, b, _)| dmin < b) {
                best = Some((c, dmin, flip));
            }
        }
        match best {
            Some((c, d, flip)) if d < threshold => {
                for k in 0..n_points {
                    let p = if flip {
                        f.points[n_points - 1 - k]
                    } else {
                        f.points[k]
                    };
                    for axis in 0..3 {
                        sums[c][k][axis] += p[axis];
                    }
                }
                counts[c] += 1;
                let inv = 1.0 / counts[c] as f64;
                for k in 0..n_points {
                    for axis in 0..3 {
                        means[c][k][axis] = sums[c][k][axis] * inv;
                    }
                }
                member_ids[c].push(f.id);
            }
            _ => {
                sums.push(f.points.clone());
                means.push(f.points.clone());
                counts.push(1);
                member_ids.push(vec![f.id]);
            }
        }
    }

    Ok(QbModel {
        threshold,
        centroids: means
            .into_iter()
            .enumerate()
            .map(|(c, points)| ResampledFiber {
                id: c as u64,
                points,
            })
            .collect(),
        member_ids,
    })
}
