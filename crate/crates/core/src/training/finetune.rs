//! Collaborative fine-tuning of both views against alternating targets.

use nalgebra::DMatrix;

use super::adam::Adam;
use super::dec::{kl_gradients, soft_assign, target_distribution, SoftAssignment};
use super::kmeans::kmeans;
use super::pairs::PairLabels;
use super::pretrain::{epoch_pairs, labels_for, pair_loss_grad, BatchForward, STAGE_FINETUNE};
use super::{rng_tag, EpochLog, TrainConfig};
use crate::encoder::{Encoder, Params, PointCloud, View};
use crate::error::{Error, Result};

/// Clusters whose total soft mass falls below this are treated as empty.
pub const MIN_CLUSTER_MASS: f64 = 1e-8;

/// One view's encoder and its `K × D` cluster centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewModel {
    pub encoder: Encoder,
    pub centroids: DMatrix<f64>,
}

impl ViewModel {
    pub fn new(encoder: Encoder, centroids: DMatrix<f64>) -> Result<Self> {
        let (k, d) = centroids.shape();
        if k < 2 {
            return Err(Error::Model(format!("need at least 2 centroids, got {k}")));
        }
        if d != encoder.config().embedding_dim {
            return Err(Error::Model(format!(
                "centroid dim {d} does not match embedding dim {}",
                encoder.config().embedding_dim
            )));
        }
        if centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("centroids contain non-finite values".into()));
        }
        for a in 0..k {
            for b in (a + 1)..k {
                if centroids.row(a) == centroids.row(b) {
                    return Err(Error::Model(format!("centroids {a} and {b} coincide")));
                }
            }
        }
        Ok(ViewModel { encoder, centroids })
    }

    pub fn n_clusters(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn view(&self) -> View {
        self.encoder.config().view
    }

    pub fn soft_assign(&self, inputs: &[PointCloud]) -> Result<SoftAssignment> {
        soft_assign(&self.encoder.embed(inputs)?, &self.centroids)
    }
}

/// Centroids for both views from one k-means run on the concatenated
/// embeddings `[z¹ | z²]`, so cluster `j` means the same group in each view.
pub fn init_joint_centroids(
    enc1: &Encoder,
    inputs1: &[PointCloud],
    enc2: &Encoder,
    inputs2: &[PointCloud],
    k: usize,
    seed: u64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if inputs1.len() != inputs2.len() {
        return Err(Error::param("views have different fiber counts"));
    }
    let z1 = enc1.embed(inputs1)?;
    let z2 = enc2.embed(inputs2)?;
    let (d1, d2) = (z1.dim(), z2.dim());
    let joint = DMatrix::from_fn(z1.len(), d1 + d2, |r, c| {
        if c < d1 {
            z1.matrix[(r, c)]
        } else {
            z2.matrix[(r, c - d1)]
        }
    });
    let c = kmeans(&joint, k, seed)?.centroids;
    Ok((
        c.columns(0, d1).into_owned(),
        c.columns(d1, d2).into_owned(),
    ))
}

/// Losses and gradients of one fine-tuning batch for one view.
pub struct FinetuneBatch {
    /// Mean squared pair error.
    pub l_s: f64,
    /// Mean KL divergence over the distinct fibers of the batch.
    pub l_c: f64,
    pub l_f: f64,
    pub grads: Params,
    pub dcentroids: DMatrix<f64>,
}

/// `L_f = mean_p (d_p − s_p)² + γ · mean_i KL(anchor_i ‖ q_i)` over the
/// fibers referenced by `pairs`.
pub fn finetune_batch(
    vm: &ViewModel,
    inputs: &[PointCloud],
    pairs: &[(usize, usize)],
    targets: &[f64],
    anchor: &SoftAssignment,
    gamma: f64,
) -> Result<FinetuneBatch> {
    if pairs.is_empty() || pairs.len() != targets.len() {
        return Err(Error::param("pair batch must be nonempty and match its targets"));
    }
    if anchor.n_rows() != inputs.len() || anchor.n_clusters() != vm.n_clusters() {
        return Err(Error::param("anchor shape does not match inputs and centroids"));
    }
    let fwd = BatchForward::run(&vm.encoder, inputs, pairs)?;
    let m = fwd.unique.len();
    let mut dz = vec![vec![0.0; vm.encoder.config().embedding_dim]; m];
    let pair_scale = 1.0 / pairs.len() as f64;
    let l_s = pair_loss_grad(&fwd.z, &fwd.local_pairs, targets, pair_scale, &mut dz) * pair_scale;

    let p: Vec<Vec<f64>> = fwd
        .unique
        .iter()
        .map(|&i| anchor.matrix().row(i).iter().copied().collect())
        .collect();
    let kl = kl_gradients(&fwd.z, &vm.centroids, &p)?;
    let kl_scale = gamma / m as f64;
    for (acc, g) in dz.iter_mut().zip(&kl.dz) {
        for (a, v) in acc.iter_mut().zip(g) {
            *a += kl_scale * v;
        }
    }
    let l_c = kl.loss / m as f64;
    Ok(FinetuneBatch {
        l_s,
        l_c,
        l_f: l_s + gamma * l_c,
        grads: fwd.backward(&vm.encoder, &dz),
        dcentroids: kl.dcentroids * kl_scale,
    })
}

/// Emitted whenever a view's clustering term is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneEvent {
    pub epoch: usize,
    /// View whose targets anchor this epoch.
    pub anchor: View,
    /// View being updated.
    pub view: View,
    pub l_c: f64,
}

pub struct FinetuneOutcome {
    pub vm1: ViewModel,
    pub vm2: ViewModel,
    pub log: Vec<EpochLog>,
}

fn check_mass(q: &SoftAssignment) -> Result<()> {
    for (j, m) in q.cluster_mass().into_iter().enumerate() {
        if m < MIN_CLUSTER_MASS {
            return Err(Error::DegenerateCluster { cluster: j, mass: m });
        }
    }
    Ok(())
}

struct ViewState<'a> {
    vm: ViewModel,
    inputs: &'a [PointCloud],
    labels: &'a dyn PairLabels,
    opt: Adam,
}

impl ViewState<'_> {
    fn epoch(
        &mut self,
        epoch: usize,
        anchor: &SoftAssignment,
        cfg: &TrainConfig,
    ) -> Result<(f64, f64)> {
        let view = self.vm.view();
        let pairs = epoch_pairs(cfg, self.inputs.len(), rng_tag(STAGE_FINETUNE, view, epoch))?;
        let (mut ls, mut lc, mut batches) = (0.0, 0.0, 0usize);
        for batch in pairs.chunks(cfg.batch_size) {
            let targets = labels_for(self.labels, batch)?;
            let step = finetune_batch(&self.vm, self.inputs, batch, &targets, anchor, cfg.gamma)?;
            if !step.l_f.is_finite() || !step.grads.all_finite() {
                return Err(Error::Divergence {
                    epoch,
                    stage: "finetune".into(),
                });
            }
            ls += step.l_s * batch.len() as f64;
            lc += step.l_c;
            batches += 1;
            let mut ps: Vec<&mut DMatrix<f64>> = self
                .vm
                .encoder
                .params_mut()
                .tensors
                .iter_mut()
                .map(|t| &mut t.value)
                .collect();
            ps.push(&mut self.vm.centroids);
            let mut gs: Vec<&DMatrix<f64>> = step.grads.tensors.iter().map(|t| &t.value).collect();
            gs.push(&step.dcentroids);
            self.opt.step(cfg.finetune_lr, &mut ps, &gs);
        }
        Ok((ls / pairs.len() as f64, lc / batches as f64))
    }
}

fn optimiser(vm: &ViewModel) -> Adam {
    Adam::new(
        vm.encoder
            .params()
            .tensors
            .iter()
            .map(|t| t.value.shape())
            .chain([vm.centroids.shape()]),
    )
}

/// Runs `cfg.finetune_epochs` epochs. Odd epochs (1-based) anchor both views
/// on the geometric targets, even epochs on the functional ones. Targets are
/// recomputed at the start of every epoch; encoders and centroids are both
/// updated.
#[allow(clippy::too_many_arguments)]
pub fn finetune_collaborative(
    vm1: ViewModel,
    vm2: ViewModel,
    inputs1: &[PointCloud],
    inputs2: &[PointCloud],
    labels1: &dyn PairLabels,
    labels2: &dyn PairLabels,
    cfg: &TrainConfig,
    mut hook: Option<&mut dyn FnMut(&FinetuneEvent)>,
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    if vm1.n_clusters() != vm2.n_clusters() {
        return Err(Error::Model(format!(
            "views disagree on K: {} vs {}",
            vm1.n_clusters(),
            vm2.n_clusters()
        )));
    }
    let n = inputs1.len();
    if inputs2.len() != n || labels1.len() != n || labels2.len() != n {
        return Err(Error::param("views and labels must cover the same fibers"));
    }
    let mut states = [
        ViewState {
            opt: optimiser(&vm1),
            vm: vm1,
            inputs: inputs1,
            labels: labels1,
        },
        ViewState {
            opt: optimiser(&vm2),
            vm: vm2,
            inputs: inputs2,
            labels: labels2,
        },
    ];
    let mut log = Vec::with_capacity(2 * cfg.finetune_epochs);
    for epoch in 1..=cfg.finetune_epochs {
        let q1 = states[0].vm.soft_assign(inputs1)?;
        let q2 = states[1].vm.soft_assign(inputs2)?;
        check_mass(&q1)?;
        check_mass(&q2)?;
        let (anchor, anchor_view) = if epoch % 2 == 1 {
            (target_distribution(&q1)?, states[0].vm.view())
        } else {
            (target_distribution(&q2)?, states[1].vm.view())
        };
        for st in states.iter_mut() {
            let view = st.vm.view();
            let (l_s, l_c) = st.epoch(epoch, &anchor, cfg)?;
            if let Some(h) = hook.as_mut() {
                h(&FinetuneEvent {
                    epoch,
                    anchor: anchor_view,
                    view,
                    l_c,
                });
            }
            log.push(EpochLog {
                epoch,
                stage: "finetune",
                view,
                l_s,
                l_c,
                l_f: l_s + cfg.gamma * l_c,
                probe_l_s: None,
            });
        }
    }
    let [s1, s2] = states;
    Ok(FinetuneOutcome {
        vm1: s1.vm,
        vm2: s2.vm,
        log,
    })
}
