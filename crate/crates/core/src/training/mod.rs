//! Siamese pretraining and collaborative fine-tuning.

mod adam;
mod dec;
mod finetune;
mod kmeans;
mod pairs;
mod pretrain;

pub use adam::Adam;
pub use dec::{
    kl_clustering_loss, kl_gradients, soft_assign, soft_assign_rows, target_distribution,
    KlGradients, SoftAssignment,
};
pub use finetune::{
    finetune_batch, finetune_collaborative, init_joint_centroids, FinetuneBatch, FinetuneEvent,
    FinetuneOutcome, ViewModel, MIN_CLUSTER_MASS,
};
pub use kmeans::{init_centroids, kmeans, KMeansResult, KMEANS_MAX_ITERS, KMEANS_TOL};
pub use pairs::{sample_pairs, FunctionalLabels, GeometricLabels, PairLabels, PairSample};
pub use pretrain::{pretrain_view, siamese_batch, PretrainOutcome, SiameseBatch};

use crate::encoder::View;
use crate::error::{Error, Result};

/// Optimisation hyperparameters for both training stages.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub pretrain_lr: f64,
    pub pretrain_epochs: usize,
    /// Multiplier applied to the pretraining rate every `lr_decay_every` epochs.
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub finetune_lr: f64,
    pub finetune_epochs: usize,
    /// Sampled pairs per optimiser step.
    pub batch_size: usize,
    /// Pairs drawn per epoch, as a multiple of the fiber count.
    pub pairs_per_fiber: usize,
    pub gamma: f64,
    pub n_clusters: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(n_clusters: usize, seed: u64) -> Self {
        TrainConfig {
            pretrain_lr: 3e-3,
            pretrain_epochs: 450,
            lr_decay: 0.1,
            lr_decay_every: 200,
            finetune_lr: 1e-5,
            finetune_epochs: 20,
            batch_size: 1024,
            pairs_per_fiber: 10,
            gamma: 0.1,
            n_clusters,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("pretrain_lr", self.pretrain_lr),
            ("finetune_lr", self.finetune_lr),
            ("lr_decay", self.lr_decay),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::param(format!("gamma = {} must be >= 0", self.gamma)));
        }
        if self.batch_size == 0 || self.pairs_per_fiber == 0 || self.lr_decay_every == 0 {
            return Err(Error::param(
                "batch_size, pairs_per_fiber and lr_decay_every must be positive",
            ));
        }
        if self.n_clusters < 2 {
            return Err(Error::param(format!(
                "n_clusters = {} must be at least 2",
                self.n_clusters
            )));
        }
        Ok(())
    }

    /// Step-decayed pretraining rate for a 1-based epoch.
    pub fn pretrain_lr_at(&self, epoch: usize) -> f64 {
        let drops = (epoch.saturating_sub(1) / self.lr_decay_every) as i32;
        self.pretrain_lr * self.lr_decay.powi(drops)
    }
}

/// Per-epoch losses of one view. `l_s` is the mean squared pair error,
/// `l_c` the mean per-fiber KL term, `l_f = l_s + gamma * l_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub stage: &'static str,
    pub view: View,
    pub l_s: f64,
    pub l_c: f64,
    pub l_f: f64,
    /// Mean squared pair error on a fixed probe set after the epoch
    /// (pretraining only).
    pub probe_l_s: Option<f64>,
}

pub(crate) fn rng_tag(stage: u64, view: View, epoch: usize) -> u64 {
    let v = match view {
        View::Geometric => 1,
        View::Functional => 2,
    };
    (stage << 48) ^ (v << 40) ^ epoch as u64
}
