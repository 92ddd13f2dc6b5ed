//! End-to-end orchestration: view preparation, both training stages,
//! checkpoint layout and run logs.

use std::fs;
use std::path::Path;

use crate::config::RunConfig;
use crate::encoder::{Encoder, EncoderConfig, PointCloud, View};
use crate::error::{Error, Result};
use crate::fiberset::FiberSet;
use crate::functional::{downsample_signals, endpoint_curves, fit_pca};
use crate::geometry::{resample, ResampledFiber};
use crate::inference::{predict_inputs, ClusterPrediction, PredictView};
use crate::textio::{fmt_f64, read_matrix, write_matrix, write_text};
use crate::training::{
    finetune_collaborative, init_joint_centroids, pretrain_view, EpochLog, FinetuneEvent,
    FunctionalLabels, GeometricLabels, TrainConfig, ViewModel,
};

pub const PRETRAIN_DIR: &str = "pretrain";
pub const FINETUNE_DIR: &str = "finetune";
const SEED_GEO_ENCODER: u64 = 0x6E0;
const SEED_FUNC_ENCODER: u64 = 0xF0C;

/// Resampled fibers and their `n_points × 3` encoder inputs.
pub fn geometric_inputs(
    fs: &FiberSet,
    n_points: usize,
) -> Result<(Vec<ResampledFiber>, Vec<PointCloud>)> {
    let resampled: Vec<ResampledFiber> = fs
        .fibers()
        .iter()
        .map(|f| resample(f, n_points))
        .collect::<Result<_>>()?;
    let clouds = resampled
        .iter()
        .map(|r| PointCloud {
            fiber_id: r.id,
            points: nalgebra::DMatrix::from_fn(n_points, 3, |i, c| r.points[i][c]),
        })
        .collect();
    Ok((resampled, clouds))
}

/// `2 × signal_len` encoder inputs. Each fiber's time subset is seeded by its
/// id, so the input of a fiber does not depend on its position in the set.
pub fn functional_inputs(fs: &FiberSet, signal_len: usize) -> Result<Vec<PointCloud>> {
    let signals = fs.signals().ok_or_else(|| {
        Error::Input(format!("bundle {} has no endpoint signals", fs.bundle_name()))
    })?;
    signals
        .iter()
        .map(|s| {
            let d = downsample_signals(s, signal_len, s.fiber_id)?;
            Ok(PointCloud {
                fiber_id: d.fiber_id,
                points: d.matrix,
            })
        })
        .collect()
}

/// SRVF curves of every fiber, from a PCA fitted on all endpoint series.
pub fn functional_labels(fs: &FiberSet, n_components: usize) -> Result<FunctionalLabels> {
    let signals = fs.signals().ok_or_else(|| {
        Error::Input(format!("bundle {} has no endpoint signals", fs.bundle_name()))
    })?;
    let series: Vec<&[f64]> = signals
        .iter()
        .flat_map(|s| [s.series_a.as_slice(), s.series_b.as_slice()])
        .collect();
    let pca = fit_pca(&series, n_components)?;
    let curves = signals
        .iter()
        .map(|s| endpoint_curves(s, &pca))
        .collect::<Result<_>>()?;
    Ok(FunctionalLabels(curves))
}

/// Everything both training stages need from one fiber set.
pub struct PreparedViews {
    pub geo_inputs: Vec<PointCloud>,
    pub func_inputs: Vec<PointCloud>,
    pub geo_labels: GeometricLabels,
    pub func_labels: FunctionalLabels,
}

impl PreparedViews {
    pub fn new(fs: &FiberSet, cfg: &RunConfig) -> Result<Self> {
        let (resampled, geo_inputs) = geometric_inputs(fs, cfg.geometric.num_points)?;
        let func_inputs = functional_inputs(fs, cfg.functional.input_channels)?;
        let func_labels = functional_labels(fs, cfg.pca_components)?;
        Ok(PreparedViews {
            geo_inputs,
            func_inputs,
            geo_labels: GeometricLabels(resampled),
            func_labels,
        })
    }

    pub fn len(&self) -> usize {
        self.geo_inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.geo_inputs.is_empty()
    }
}

/// The configured cluster count, or the number of distinct ground-truth
/// labels when the config leaves it open.
pub fn resolve_clusters(cfg: &RunConfig, fs: &FiberSet) -> Result<usize> {
    if let Some(k) = cfg.n_clusters {
        return Ok(k);
    }
    let truth = fs.true_labels().ok_or_else(|| {
        Error::Config("n_clusters is required for data without ground-truth labels".into())
    })?;
    let mut distinct: Vec<usize> = truth.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::Config(
            "ground truth has fewer than 2 clusters; set n_clusters".into(),
        ));
    }
    Ok(distinct.len())
}

pub struct Pretrained {
    pub geometric: Encoder,
    pub functional: Encoder,
    pub log: Vec<EpochLog>,
}

pub fn pretrain_both(cfg: &RunConfig, tc: &TrainConfig, views: &PreparedViews) -> Result<Pretrained> {
    let geo = Encoder::new(cfg.geometric.clone(), cfg.seed ^ SEED_GEO_ENCODER)?;
    let func = Encoder::new(cfg.functional.clone(), cfg.seed ^ SEED_FUNC_ENCODER)?;
    let g = pretrain_view(geo, &views.geo_inputs, &views.geo_labels, tc)?;
    let f = pretrain_view(func, &views.func_inputs, &views.func_labels, tc)?;
    let mut log = g.log;
    log.extend(f.log);
    Ok(Pretrained {
        geometric: g.encoder,
        functional: f.encoder,
        log,
    })
}

pub struct Finetuned {
    pub geometric: ViewModel,
    pub functional: ViewModel,
    pub log: Vec<EpochLog>,
}

/// Joint centroid initialisation followed by collaborative fine-tuning.
pub fn finetune_both(
    tc: &TrainConfig,
    geo: Encoder,
    func: Encoder,
    views: &PreparedViews,
    hook: Option<&mut dyn FnMut(&FinetuneEvent)>,
) -> Result<Finetuned> {
    let (c1, c2) = init_joint_centroids(
        &geo,
        &views.geo_inputs,
        &func,
        &views.func_inputs,
        tc.n_clusters,
        tc.seed,
    )?;
    let vm1 = ViewModel::new(geo, c1)?;
    let vm2 = ViewModel::new(func, c2)?;
    let out = finetune_collaborative(
        vm1,
        vm2,
        &views.geo_inputs,
        &views.func_inputs,
        &views.geo_labels,
        &views.func_labels,
        tc,
        hook,
    )?;
    Ok(Finetuned {
        geometric: out.vm1,
        functional: out.vm2,
        log: out.log,
    })
}

/// Result of [`train_and_predict`].
pub struct PipelineRun {
    pub models: Finetuned,
    pub pretrain_log: Vec<EpochLog>,
    pub prediction: ClusterPrediction,
}

/// Trains on `fs` and predicts its clusters with the fused assignment.
pub fn train_and_predict(cfg: &RunConfig, fs: &FiberSet) -> Result<PipelineRun> {
    cfg.validate()?;
    let k = resolve_clusters(cfg, fs)?;
    let tc = cfg.train_config(k);
    let views = PreparedViews::new(fs, cfg)?;
    let pre = pretrain_both(cfg, &tc, &views)?;
    let models = finetune_both(&tc, pre.geometric, pre.functional, &views, None)?;
    let prediction = predict_inputs(
        &models.geometric,
        &models.functional,
        &views.geo_inputs,
        &views.func_inputs,
        PredictView::Fused,
    )?;
    Ok(PipelineRun {
        models,
        pretrain_log: pre.log,
        prediction,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn encoder_file(dir: &Path, view: View) -> std::path::PathBuf {
    dir.join(format!("{}_encoder.json", view.name()))
}

fn centroid_file(dir: &Path, view: View) -> std::path::PathBuf {
    dir.join(format!("{}_centroids.txt", view.name()))
}

pub fn save_encoders(dir: &Path, geo: &Encoder, func: &Encoder) -> Result<()> {
    ensure_dir(dir)?;
    geo.save(&encoder_file(dir, View::Geometric))?;
    func.save(&encoder_file(dir, View::Functional))
}

/// Loads both pretrained encoders, checking them against the configured shapes.
pub fn load_encoders(dir: &Path, cfg: &RunConfig) -> Result<(Encoder, Encoder)> {
    let load = |view: View, expected: &EncoderConfig| {
        let path = encoder_file(dir, view);
        if !path.is_file() {
            return Err(Error::Model(format!("missing checkpoint {}", path.display())));
        }
        Encoder::load(&path, Some(expected))
    };
    Ok((
        load(View::Geometric, &cfg.geometric)?,
        load(View::Functional, &cfg.functional)?,
    ))
}

pub fn save_view_models(dir: &Path, vm1: &ViewModel, vm2: &ViewModel) -> Result<()> {
    ensure_dir(dir)?;
    for vm in [vm1, vm2] {
        vm.encoder.save(&encoder_file(dir, vm.view()))?;
        write_matrix(&centroid_file(dir, vm.view()), &vm.centroids)?;
    }
    Ok(())
}

/// Loads the fine-tuned models written by [`save_view_models`].
pub fn load_view_models(dir: &Path) -> Result<(ViewModel, ViewModel)> {
    let load = |view: View| -> Result<ViewModel> {
        let enc_path = encoder_file(dir, view);
        let cen_path = centroid_file(dir, view);
        for p in [&enc_path, &cen_path] {
            if !p.is_file() {
                return Err(Error::Model(format!("missing checkpoint {}", p.display())));
            }
        }
        let encoder = Encoder::load(&enc_path, None)?;
        if encoder.config().view != view {
            return Err(Error::Model(format!(
                "{} holds a {} encoder",
                enc_path.display(),
                encoder.config().view.name()
            )));
        }
        ViewModel::new(encoder, read_matrix(&cen_path)?)
    };
    let vm1 = load(View::Geometric)?;
    let vm2 = load(View::Functional)?;
    if vm1.n_clusters() != vm2.n_clusters() {
        return Err(Error::Model(format!(
            "checkpoints disagree on K: {} vs {}",
            vm1.n_clusters(),
            vm2.n_clusters()
        )));
    }
    Ok((vm1, vm2))
}

/// `log.csv` text: one row per (epoch, stage, view).
pub fn log_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,stage,view,l_s,l_c,l_f,probe_l_s\n");
    for e in log {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e.epoch,
            e.stage,
            e.view.name(),
            fmt_f64(e.l_s),
            fmt_f64(e.l_c),
            fmt_f64(e.l_f),
            e.probe_l_s.map_or("NA".into(), fmt_f64)
        ));
    }
    out
}

/// Writes `config.txt` with `n_clusters` resolved to `k`; returns its text.
pub fn write_config(dir: &Path, cfg: &RunConfig, k: usize) -> Result<String> {
    ensure_dir(dir)?;
    let mut resolved = cfg.clone();
    resolved.n_clusters = Some(k);
    let text = resolved.to_text();
    write_text(&dir.join("config.txt"), &text)?;
    Ok(text)
}

/// Writes `config.txt` and `log.csv` into `dir`.
pub fn write_run_files(dir: &Path, cfg: &RunConfig, k: usize, log: &[EpochLog]) -> Result<()> {
    write_config(dir, cfg, k)?;
    write_text(&dir.join("log.csv"), &log_csv(log))
}

/// Writes `labels.txt` and `fused_q.txt` into `dir`.
pub fn save_prediction(dir: &Path, labels: &[usize], pred: &ClusterPrediction) -> Result<()> {
    ensure_dir(dir)?;
    crate::textio::write_labels(&dir.join("labels.txt"), labels)?;
    write_matrix(&dir.join("fused_q.txt"), &pred.fused_q)
}
