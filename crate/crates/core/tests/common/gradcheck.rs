//! Central finite-difference checks of the hand-written gradients, on a
//! 10-fiber probe taken from the `easy` synthetic preset.

use nalgebra::DMatrix;
use rand::Rng;

use dmvfc::encoder::{Encoder, EncoderConfig, PointCloud, View};
use dmvfc::fiberset::FiberSet;
use dmvfc::pipeline::{functional_inputs, geometric_inputs};
use dmvfc::synthetic::{generate, preset};
use dmvfc::training::{
    finetune_batch, init_centroids, siamese_batch, soft_assign, target_distribution,
    SoftAssignment, ViewModel,
};

use super::{rng, to_rows, uniform};

pub const STEP: f64 = 1e-4;
pub const MAX_REL_ERR: f64 = 1e-3;
const PROBE_FIBERS: usize = 10;
const PROBE_K: usize = 3;
const SAMPLED_PARAMS: usize = 40;

fn probe_set() -> FiberSet {
    let fs = generate(&preset("easy", 5).unwrap()).unwrap();
    let idx: Vec<usize> = (0..PROBE_FIBERS).map(|i| i * fs.len() / PROBE_FIBERS).collect();
    fs.select(&idx).unwrap()
}

fn probe_inputs(view: View) -> (Encoder, Vec<PointCloud>) {
    let fs = probe_set();
    let cfg = EncoderConfig::for_view(view);
    let inputs = match view {
        View::Geometric => geometric_inputs(&fs, cfg.num_points).unwrap().1,
        View::Functional => functional_inputs(&fs, cfg.input_channels).unwrap(),
    };
    (Encoder::new(cfg, 21).unwrap(), inputs)
}

fn probe_pairs(r: &mut impl Rng) -> (Vec<(usize, usize)>, Vec<f64>) {
    let mut pairs: Vec<(usize, usize)> = (0..PROBE_FIBERS).map(|i| (i, (i + 3) % PROBE_FIBERS)).collect();
    for _ in 0..10 {
        let i = r.random_range(0..PROBE_FIBERS);
        let j = (i + r.random_range(1..PROBE_FIBERS)) % PROBE_FIBERS;
        pairs.push((i, j));
    }
    let targets = pairs.iter().map(|_| uniform(r, 0.0, 3.0)).collect();
    (pairs, targets)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn pair_loss(z: &[Vec<f64>], pairs: &[(usize, usize)], targets: &[f64]) -> f64 {
    pairs
        .iter()
        .zip(targets)
        .map(|(&(i, j), &s)| (distance(&z[i], &z[j]) - s).powi(2))
        .sum::<f64>()
        / pairs.len() as f64
}

fn embed_rows(enc: &Encoder, inputs: &[PointCloud]) -> Vec<Vec<f64>> {
    to_rows(&enc.embed(inputs).unwrap().matrix)
}

/// Outcome of one finite-difference comparison.
#[derive(Debug, Clone, Copy)]
pub struct GradReport {
    /// Worst coordinate-wise relative error over the checked coordinates.
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates whose `±STEP` interval straddles a max-aggregation or
    /// leaky-ReLU switch, where a finite difference is not a derivative.
    pub skipped: usize,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.checked >= MIN_CHECKED && self.skipped * 4 <= self.checked && self.max_rel_err < MAX_REL_ERR
    }
}

pub const MIN_CHECKED: usize = 20;

#[derive(Default)]
struct Collector {
    analytic: Vec<f64>,
    numeric: Vec<f64>,
    skipped: usize,
}

impl Collector {
    fn probe(&mut self, analytic: f64, x0: f64, f: impl Fn(f64) -> f64) {
        let wide = (f(x0 + STEP) - f(x0 - STEP)) / (2.0 * STEP);
        let h = STEP / 10.0;
        let narrow = (f(x0 + h) - f(x0 - h)) / (2.0 * h);
        if (wide - narrow).abs() > 1e-4 * wide.abs().max(narrow.abs()).max(1e-6) {
            self.skipped += 1;
            return;
        }
        self.analytic.push(analytic);
        self.numeric.push(wide);
    }

    /// Relative errors use a floor relative to the largest sampled gradient
    /// so exact zeros do not divide by zero.
    fn report(&self) -> GradReport {
        let scale = self
            .analytic
            .iter()
            .chain(&self.numeric)
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = (1e-6 * scale).max(1e-12);
        let max_rel_err = self
            .analytic
            .iter()
            .zip(&self.numeric)
            .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
            .fold(0.0, f64::max);
        GradReport {
            max_rel_err,
            checked: self.analytic.len(),
            skipped: self.skipped,
        }
    }
}

/// Pair-regression loss gradient of a default-sized encoder at sampled
/// parameters.
pub fn encoder_gradient_check(view: View) -> GradReport {
    let mut r = rng(view as u64 + 100);
    let (enc, inputs) = probe_inputs(view);
    let (pairs, targets) = probe_pairs(&mut r);
    let grads = siamese_batch(&enc, &inputs, &pairs, &targets).unwrap().grads;
    let total = enc.params().len();
    let mut c = Collector::default();
    for _ in 0..SAMPLED_PARAMS {
        let idx = r.random_range(0..total);
        c.probe(grads.get(idx), enc.params().get(idx), |x| {
            let mut e = enc.clone();
            e.params_mut().set(idx, x);
            pair_loss(&embed_rows(&e, &inputs), &pairs, &targets)
        });
    }
    c.report()
}

fn kl_rows(p: &SoftAssignment, q: &SoftAssignment, rows: &[usize]) -> f64 {
    rows.iter()
        .map(|&i| {
            (0..q.n_clusters())
                .map(|j| {
                    let pv = p.matrix()[(i, j)];
                    pv * (pv / q.matrix()[(i, j)]).ln()
                })
                .sum::<f64>()
        })
        .sum::<f64>()
        / rows.len() as f64
}

/// Gradient of the fine-tuning objective with respect to sampled encoder
/// parameters and every centroid entry, for a fixed anchor.
pub fn finetune_gradient_check(view: View, gamma: f64) -> GradReport {
    let mut r = rng(view as u64 + 200);
    let (enc, inputs) = probe_inputs(view);
    let (pairs, targets) = probe_pairs(&mut r);
    let z = enc.embed(&inputs).unwrap();
    let mut centroids = init_centroids(&z, PROBE_K, 4).unwrap();
    centroids += DMatrix::from_fn(PROBE_K, z.dim(), |_, _| uniform(&mut r, -0.05, 0.05));
    let vm = ViewModel::new(enc, centroids).unwrap();
    let anchor = target_distribution(&soft_assign(&z, &vm.centroids).unwrap()).unwrap();
    let step = finetune_batch(&vm, &inputs, &pairs, &targets, &anchor, gamma).unwrap();

    let mut used: Vec<usize> = pairs.iter().flat_map(|&(i, j)| [i, j]).collect();
    used.sort_unstable();
    used.dedup();
    let objective = |vm: &ViewModel| {
        let z = vm.encoder.embed(&inputs).unwrap();
        let q = soft_assign(&z, &vm.centroids).unwrap();
        pair_loss(&to_rows(&z.matrix), &pairs, &targets) + gamma * kl_rows(&anchor, &q, &used)
    };

    let mut c = Collector::default();
    let total = vm.encoder.params().len();
    for _ in 0..SAMPLED_PARAMS {
        let idx = r.random_range(0..total);
        c.probe(step.grads.get(idx), vm.encoder.params().get(idx), |x| {
            let mut v = vm.clone();
            v.encoder.params_mut().set(idx, x);
            objective(&v)
        });
    }
    for row in 0..PROBE_K {
        for col in 0..vm.centroids.ncols() {
            c.probe(step.dcentroids[(row, col)], vm.centroids[(row, col)], |x| {
                let mut v = vm.clone();
                v.centroids[(row, col)] = x;
                objective(&v)
            });
        }
    }
    c.report()
}
