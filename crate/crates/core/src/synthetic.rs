//! Synthetic bundles with known geometric and functional sub-clusters.
//!
//! Every fiber follows a cubic Bezier arch. Geometric cluster `g` shifts the
//! arch by `g · geo_separation` along y, and each fiber perturbs the four
//! control points with isotropic Gaussian noise of per-axis sd
//! `geo_jitter / 3`, clipped radially at `geo_jitter`. Curve points are convex
//! combinations of control points, so no point of a raw fiber moves farther
//! than `geo_jitter` from its template.
//!
//! Endpoint signals are sinusoids at the functional cluster's base frequency
//! (the two endpoints a quarter period apart) plus a slow drift shared by all
//! fibers and white noise. The label of a fiber is `g · n_func_per_geo + f`.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fiberset::{EndpointSignals, Fiber, FiberSet, Point3};
use crate::seeded_rng;

/// Points sampled along each raw fiber before resampling.
pub const RAW_POINTS: usize = 40;
const TEMPLATE: [Point3; 4] = [
    [-40.0, 0.0, 0.0],
    [-15.0, 0.0, 25.0],
    [15.0, 0.0, 25.0],
    [40.0, 0.0, 0.0],
];
const DRIFT_AMPLITUDE: f64 = 0.5;
const DRIFT_FREQ: f64 = 0.002;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_geo_clusters: usize,
    pub n_func_per_geo: usize,
    pub fibers_per_cluster: usize,
    /// Offset between neighbouring geometric templates, millimeters.
    pub geo_separation: f64,
    /// Maximum control-point displacement, millimeters.
    pub geo_jitter: f64,
    pub signal_length: usize,
    /// Cycles per sample, one per functional sub-cluster.
    pub func_base_freqs: Vec<f64>,
    pub signal_noise_sd: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_geo_clusters: 2,
            n_func_per_geo: 2,
            fibers_per_cluster: 50,
            geo_separation: 20.0,
            geo_jitter: 1.0,
            signal_length: 1200,
            func_base_freqs: vec![0.02, 0.045],
            signal_noise_sd: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn n_clusters(&self) -> usize {
        self.n_geo_clusters * self.n_func_per_geo
    }

    pub fn n_fibers(&self) -> usize {
        self.n_clusters() * self.fibers_per_cluster
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_geo_clusters == 0 || self.n_func_per_geo == 0 || self.fibers_per_cluster == 0 {
            return Err(Error::param("cluster counts and fibers_per_cluster must be positive"));
        }
        if !(self.geo_separation > 0.0 && self.geo_separation.is_finite()) {
            return Err(Error::param(format!(
                "geo_separation = {} must be positive",
                self.geo_separation
            )));
        }
        for (name, v) in [("geo_jitter", self.geo_jitter), ("signal_noise_sd", self.signal_noise_sd)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} = {v} must be >= 0")));
            }
        }
        if self.signal_length < 2 {
            return Err(Error::param("signal_length must be at least 2"));
        }
        if self.func_base_freqs.len() != self.n_func_per_geo {
            return Err(Error::param(format!(
                "{} base frequencies for {} functional clusters",
                self.func_base_freqs.len(),
                self.n_func_per_geo
            )));
        }
        if self.func_base_freqs.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::param("base frequencies must be positive"));
        }
        Ok(())
    }
}

fn bezier(c: &[Point3; 4], t: f64) -> Point3 {
    let u = 1.0 - t;
    let w = [u * u * u, 3.0 * u * u * t, 3.0 * u * t * t, t * t * t];
    let mut p = [0.0; 3];
    for (k, wk) in w.iter().enumerate() {
        for d in 0..3 {
            p[d] += wk * c[k][d];
        }
    }
    p
}

/// Fiber set for `cfg`, deterministic in `cfg.seed`.
pub fn generate(cfg: &SynthConfig) -> Result<FiberSet> {
    cfg.validate()?;
    let mut rng = seeded_rng(cfg.seed, 0x5EED_F1BE);
    let ctrl_noise = Normal::new(0.0, cfg.geo_jitter / 3.0).expect("finite sd");
    let sig_noise = Normal::new(0.0, cfg.signal_noise_sd).expect("finite sd");
    let drift_phase = rng.random_range(0.0..2.0 * PI);
    let t_len = cfg.signal_length;
    let drift: Vec<f64> = (0..t_len)
        .map(|t| DRIFT_AMPLITUDE * (2.0 * PI * DRIFT_FREQ * t as f64 + drift_phase).sin())
        .collect();

    let mut raw = Vec::with_capacity(cfg.n_fibers());
    for g in 0..cfg.n_geo_clusters {
        let shift = g as f64 * cfg.geo_separation;
        for (f, &freq) in cfg.func_base_freqs.iter().enumerate() {
            for _ in 0..cfg.fibers_per_cluster {
                let mut ctrl = TEMPLATE;
                for c in ctrl.iter_mut() {
                    let mut delta = [0.0; 3];
                    for v in delta.iter_mut() {
                        *v = ctrl_noise.sample(&mut rng);
                    }
                    let norm = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let clip = if norm > cfg.geo_jitter { cfg.geo_jitter / norm } else { 1.0 };
                    c[1] += shift;
                    for (v, d) in c.iter_mut().zip(delta) {
                        *v += d * clip;
                    }
                }
                let points: Vec<Point3> = (0..RAW_POINTS)
                    .map(|k| bezier(&ctrl, k as f64 / (RAW_POINTS - 1) as f64))
                    .collect();
                let mut series = |phase: f64| -> Vec<f64> {
                    (0..t_len)
                        .map(|t| {
                            (2.0 * PI * freq * t as f64 + phase).sin()
                                + drift[t]
                                + sig_noise.sample(&mut rng)
                        })
                        .collect()
                };
                let a = series(0.0);
                let b = series(PI / 2.0);
                raw.push((points, a, b, g * cfg.n_func_per_geo + f));
            }
        }
    }
    raw.shuffle(&mut rng);

    let mut fibers = Vec::with_capacity(raw.len());
    let mut signals = Vec::with_capacity(raw.len());
    let mut labels = Vec::with_capacity(raw.len());
    for (id, (points, a, b, label)) in raw.into_iter().enumerate() {
        let id = id as u64;
        fibers.push(Fiber::new(id, points)?);
        signals.push(EndpointSignals::new(id, a, b)?);
        labels.push(label);
    }
    FiberSet::new(
        "synthetic".to_string(),
        fibers,
        Some(signals),
        Some(labels),
    )
}

/// The three fixed benchmark configurations: `easy`, `func-only`, `geo-only`.
pub fn benchmark_suite(seed: u64) -> Vec<(String, SynthConfig)> {
    let easy = SynthConfig {
        seed,
        ..SynthConfig::default()
    };
    let func_only = SynthConfig {
        n_geo_clusters: 1,
        n_func_per_geo: 3,
        func_base_freqs: vec![0.02, 0.035, 0.05],
        seed,
        ..SynthConfig::default()
    };
    let geo_only = SynthConfig {
        n_geo_clusters: 3,
        n_func_per_geo: 1,
        func_base_freqs: vec![0.03],
        seed,
        ..SynthConfig::default()
    };
    vec![
        ("easy".into(), easy),
        ("func-only".into(), func_only),
        ("geo-only".into(), geo_only),
    ]
}

/// Preset by name.
pub fn preset(name: &str, seed: u64) -> Result<SynthConfig> {
    benchmark_suite(seed)
        .into_iter()
        .find(|(n, _)| n == name)
        .map(|(_, c)| c)
        .ok_or_else(|| {
            Error::param(format!(
                "unknown preset {name:?} (expected easy, func-only or geo-only)"
            ))
        })
}
