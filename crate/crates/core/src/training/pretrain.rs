//! Siamese pseudo-label regression for one view.

use rand::Rng;
use rayon::prelude::*;

use super::adam::Adam;
use super::pairs::{sample_pairs, PairLabels};
use super::{rng_tag, EpochLog, TrainConfig};
use crate::encoder::{Encoder, ForwardCache, Params, PointCloud};
use crate::error::{Error, Result};
use crate::seeded_rng;

const PROBE_PAIRS: usize = 2048;
pub(crate) const STAGE_PRETRAIN: u64 = 1;
pub(crate) const STAGE_FINETUNE: u64 = 2;
const STAGE_PROBE: u64 = 3;

/// Forward state of the distinct fibers referenced by a pair batch.
pub(crate) struct BatchForward {
    /// Fiber index of each local slot.
    pub unique: Vec<usize>,
    /// Pairs rewritten as local slot indices.
    pub local_pairs: Vec<(usize, usize)>,
    pub z: Vec<Vec<f64>>,
    pub caches: Vec<ForwardCache>,
}

impl BatchForward {
    pub fn run(enc: &Encoder, inputs: &[PointCloud], pairs: &[(usize, usize)]) -> Result<Self> {
        let mut slot = vec![usize::MAX; inputs.len()];
        let mut unique = Vec::new();
        let mut local_pairs = Vec::with_capacity(pairs.len());
        for &(i, j) in pairs {
            if i >= inputs.len() || j >= inputs.len() {
                return Err(Error::param(format!("pair ({i}, {j}) out of range")));
            }
            for idx in [i, j] {
                if slot[idx] == usize::MAX {
                    slot[idx] = unique.len();
                    unique.push(idx);
                }
            }
            local_pairs.push((slot[i], slot[j]));
        }
        let refs: Vec<&PointCloud> = unique.iter().map(|&i| &inputs[i]).collect();
        let (z, caches) = enc.forward_batch(&refs)?.into_iter().unzip();
        Ok(BatchForward {
            unique,
            local_pairs,
            z,
            caches,
        })
    }

    pub fn backward(&self, enc: &Encoder, dz: &[Vec<f64>]) -> Params {
        let refs: Vec<&ForwardCache> = self.caches.iter().collect();
        enc.backward_batch(&refs, dz)
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Adds `scale · ∂/∂z Σ_p (d_p − s_p)²` into `dz` and returns the raw sum.
/// Coincident embeddings contribute no gradient.
pub(crate) fn pair_loss_grad(
    z: &[Vec<f64>],
    local_pairs: &[(usize, usize)],
    targets: &[f64],
    scale: f64,
    dz: &mut [Vec<f64>],
) -> f64 {
    let mut loss = 0.0;
    for (&(a, b), &s) in local_pairs.iter().zip(targets) {
        let d = distance(&z[a], &z[b]);
        let r = d - s;
        loss += r * r;
        if d > 0.0 {
            let coef = scale * 2.0 * r / d;
            for c in 0..z[a].len() {
                let g = coef * (z[a][c] - z[b][c]);
                dz[a][c] += g;
                dz[b][c] -= g;
            }
        }
    }
    loss
}

pub(crate) fn labels_for(labels: &dyn PairLabels, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
    pairs.par_iter().map(|&(i, j)| labels.label(i, j)).collect()
}

/// Mean squared pair error and gradient of one pair batch.
pub struct SiameseBatch {
    /// Mean of `(d − s)²` over the batch.
    pub loss: f64,
    pub grads: Params,
}

/// Loss and parameter gradient of `mean_p (‖f(x_i) − f(x_j)‖ − s_p)²`.
pub fn siamese_batch(
    enc: &Encoder,
    inputs: &[PointCloud],
    pairs: &[(usize, usize)],
    targets: &[f64],
) -> Result<SiameseBatch> {
    if pairs.is_empty() || pairs.len() != targets.len() {
        return Err(Error::param("pair batch must be nonempty and match its targets"));
    }
    let fwd = BatchForward::run(enc, inputs, pairs)?;
    let mut dz = vec![vec![0.0; enc.config().embedding_dim]; fwd.unique.len()];
    let scale = 1.0 / pairs.len() as f64;
    let loss = pair_loss_grad(&fwd.z, &fwd.local_pairs, targets, scale, &mut dz) * scale;
    Ok(SiameseBatch {
        loss,
        grads: fwd.backward(enc, &dz),
    })
}

pub(crate) fn adam_for(enc: &Encoder) -> Adam {
    Adam::new(enc.params().tensors.iter().map(|t| t.value.shape()))
}

pub(crate) fn apply(enc: &mut Encoder, opt: &mut Adam, lr: f64, grads: &Params) {
    let mut ps: Vec<_> = enc
        .params_mut()
        .tensors
        .iter_mut()
        .map(|t| &mut t.value)
        .collect();
    let gs: Vec<_> = grads.tensors.iter().map(|t| &t.value).collect();
    opt.step(lr, &mut ps, &gs);
}

pub(crate) fn epoch_pairs(cfg: &TrainConfig, n: usize, tag: u64) -> Result<Vec<(usize, usize)>> {
    let seed = seeded_rng(cfg.seed, tag).random::<u64>();
    sample_pairs(n, cfg.pairs_per_fiber * n, seed)
}

/// Fixed pair set and labels used to track regression quality.
pub(crate) struct Probe {
    pairs: Vec<(usize, usize)>,
    targets: Vec<f64>,
}

impl Probe {
    pub fn new(cfg: &TrainConfig, view: crate::encoder::View, labels: &dyn PairLabels) -> Result<Self> {
        let n = labels.len();
        let seed = seeded_rng(cfg.seed, rng_tag(STAGE_PROBE, view, 0)).random::<u64>();
        let pairs = sample_pairs(n, PROBE_PAIRS.min(cfg.pairs_per_fiber * n), seed)?;
        let targets = labels_for(labels, &pairs)?;
        Ok(Probe { pairs, targets })
    }

    pub fn loss(&self, enc: &Encoder, inputs: &[PointCloud]) -> Result<f64> {
        let z = enc.embed(inputs)?;
        let row = |i: usize| -> Vec<f64> { z.matrix.row(i).iter().copied().collect() };
        let total: f64 = self
            .pairs
            .iter()
            .zip(&self.targets)
            .map(|(&(i, j), &s)| (distance(&row(i), &row(j)) - s).powi(2))
            .sum();
        Ok(total / self.pairs.len() as f64)
    }
}

pub struct PretrainOutcome {
    pub encoder: Encoder,
    pub log: Vec<EpochLog>,
    /// Probe loss of the untrained encoder.
    pub initial_probe_l_s: f64,
}

/// Trains `enc` to regress the view's pseudo-labels from embedding distances.
pub fn pretrain_view(
    mut enc: Encoder,
    inputs: &[PointCloud],
    labels: &dyn PairLabels,
    cfg: &TrainConfig,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    let n = inputs.len();
    if labels.len() != n {
        return Err(Error::param(format!(
            "{} inputs but {} labelled fibers",
            n,
            labels.len()
        )));
    }
    let view = enc.config().view;
    let probe = Probe::new(cfg, view, labels)?;
    let initial_probe_l_s = probe.loss(&enc, inputs)?;
    let mut opt = adam_for(&enc);
    let mut log = Vec::with_capacity(cfg.pretrain_epochs);
    let diverged = |epoch| Error::Divergence {
        epoch,
        stage: "pretrain".into(),
    };
    for epoch in 1..=cfg.pretrain_epochs {
        let lr = cfg.pretrain_lr_at(epoch);
        let pairs = epoch_pairs(cfg, n, rng_tag(STAGE_PRETRAIN, view, epoch))?;
        let mut total = 0.0;
        for batch in pairs.chunks(cfg.batch_size) {
            let targets = labels_for(labels, batch)?;
            let step = siamese_batch(&enc, inputs, batch, &targets)?;
            if !step.loss.is_finite() || !step.grads.all_finite() {
                return Err(diverged(epoch));
            }
            total += step.loss * batch.len() as f64;
            apply(&mut enc, &mut opt, lr, &step.grads);
        }
        let l_s = total / pairs.len() as f64;
        let probe_l_s = probe.loss(&enc, inputs)?;
        if !probe_l_s.is_finite() || !enc.params().all_finite() {
            return Err(diverged(epoch));
        }
        log.push(EpochLog {
            epoch,
            stage: "pretrain",
            view,
            l_s,
            l_c: 0.0,
            l_f: l_s,
            probe_l_s: Some(probe_l_s),
        });
    }
    Ok(PretrainOutcome {
        encoder: enc,
        log,
        initial_probe_l_s,
    })
}
