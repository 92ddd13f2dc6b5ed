//! Flat `key=value` run configuration covering training, both encoders and
//! the synthetic generator.

use std::path::{Path, PathBuf};

use crate::encoder::{EncoderConfig, View};
use crate::error::{Error, Result};
use crate::functional::DEFAULT_PCA_COMPONENTS;
use crate::synthetic::SynthConfig;
use crate::textio::{content_lines, read_text};
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Cluster count; `None` means "take it from the dataset's ground truth".
    pub n_clusters: Option<usize>,
    pub pretrain_lr: f64,
    pub pretrain_epochs: usize,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub finetune_lr: f64,
    pub finetune_epochs: usize,
    pub batch_size: usize,
    pub pairs_per_fiber: usize,
    pub gamma: f64,
    pub pca_components: usize,
    pub geometric: EncoderConfig,
    pub functional: EncoderConfig,
    pub synth: SynthConfig,
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::new(2, 0);
        RunConfig {
            seed: 0,
            n_clusters: None,
            pretrain_lr: t.pretrain_lr,
            pretrain_epochs: t.pretrain_epochs,
            lr_decay: t.lr_decay,
            lr_decay_every: t.lr_decay_every,
            finetune_lr: t.finetune_lr,
            finetune_epochs: t.finetune_epochs,
            batch_size: t.batch_size,
            pairs_per_fiber: t.pairs_per_fiber,
            gamma: t.gamma,
            pca_components: DEFAULT_PCA_COMPONENTS,
            geometric: EncoderConfig::geometric(),
            functional: EncoderConfig::functional(),
            synth: SynthConfig::default(),
            dataset: None,
            out: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| parse_num(key, s.trim())).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Training settings for a resolved cluster count.
    pub fn train_config(&self, n_clusters: usize) -> TrainConfig {
        TrainConfig {
            pretrain_lr: self.pretrain_lr,
            pretrain_epochs: self.pretrain_epochs,
            lr_decay: self.lr_decay,
            lr_decay_every: self.lr_decay_every,
            finetune_lr: self.finetune_lr,
            finetune_epochs: self.finetune_epochs,
            batch_size: self.batch_size,
            pairs_per_fiber: self.pairs_per_fiber,
            gamma: self.gamma,
            n_clusters,
            seed: self.seed,
        }
    }

    pub fn encoder_config(&self, view: View) -> &EncoderConfig {
        match view {
            View::Geometric => &self.geometric,
            View::Functional => &self.functional,
        }
    }

    /// Checks every value; called before any work starts.
    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.train_config(self.n_clusters.unwrap_or(2))
            .validate()
            .map_err(wrap)?;
        if self.pretrain_epochs == 0 {
            return Err(Error::Config("pretrain_epochs must be positive".into()));
        }
        if let Some(k) = self.n_clusters {
            if k < 2 {
                return Err(Error::Config(format!("n_clusters = {k} must be at least 2")));
            }
        }
        if self.pca_components < 2 {
            return Err(Error::Config("pca_components must be at least 2".into()));
        }
        if self.geometric.view != View::Geometric || self.functional.view != View::Functional {
            return Err(Error::Config("encoder views are swapped".into()));
        }
        self.geometric.validate().map_err(wrap)?;
        self.functional.validate().map_err(wrap)?;
        self.synth.validate().map_err(wrap)?;
        Ok(())
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = parse_num(key, v)?,
            "n_clusters" => {
                self.n_clusters = if v == "auto" { None } else { Some(parse_num(key, v)?) }
            }
            "pretrain_lr" => self.pretrain_lr = parse_num(key, v)?,
            "pretrain_epochs" => self.pretrain_epochs = parse_num(key, v)?,
            "lr_decay" => self.lr_decay = parse_num(key, v)?,
            "lr_decay_every" => self.lr_decay_every = parse_num(key, v)?,
            "finetune_lr" => self.finetune_lr = parse_num(key, v)?,
            "finetune_epochs" => self.finetune_epochs = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "pairs_per_fiber" => self.pairs_per_fiber = parse_num(key, v)?,
            "gamma" => self.gamma = parse_num(key, v)?,
            "pca_components" => self.pca_components = parse_num(key, v)?,
            "geo.num_points" => self.geometric.num_points = parse_num(key, v)?,
            "geo.knn_k" => self.geometric.knn_k = parse_num(key, v)?,
            "geo.layer_widths" => self.geometric.layer_widths = parse_list(key, v)?,
            "geo.embedding_dim" => self.geometric.embedding_dim = parse_num(key, v)?,
            "func.signal_len" => self.functional.input_channels = parse_num(key, v)?,
            "func.knn_k" => self.functional.knn_k = parse_num(key, v)?,
            "func.layer_widths" => self.functional.layer_widths = parse_list(key, v)?,
            "func.embedding_dim" => self.functional.embedding_dim = parse_num(key, v)?,
            "synth.n_geo_clusters" => self.synth.n_geo_clusters = parse_num(key, v)?,
            "synth.n_func_per_geo" => self.synth.n_func_per_geo = parse_num(key, v)?,
            "synth.fibers_per_cluster" => self.synth.fibers_per_cluster = parse_num(key, v)?,
            "synth.geo_separation" => self.synth.geo_separation = parse_num(key, v)?,
            "synth.geo_jitter" => self.synth.geo_jitter = parse_num(key, v)?,
            "synth.signal_length" => self.synth.signal_length = parse_num(key, v)?,
            "synth.func_base_freqs" => self.synth.func_base_freqs = parse_list(key, v)?,
            "synth.signal_noise_sd" => self.synth.signal_noise_sd = parse_num(key, v)?,
            "dataset" => self.dataset = (!v.is_empty()).then(|| PathBuf::from(v)),
            "out" => self.out = (!v.is_empty()).then(|| PathBuf::from(v)),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Overlays the settings of a `key=value` text on `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (line, content) in content_lines(text) {
            let (k, v) = content
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line}: expected key=value")))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {line}: {e}")))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        RunConfig::parse(&read_text(path)?)
    }

    /// Every setting, one `key=value` per line, in a fixed order.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        let entries: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            (
                "n_clusters",
                self.n_clusters.map_or("auto".into(), |k| k.to_string()),
            ),
            ("pretrain_lr", format!("{:e}", self.pretrain_lr)),
            ("pretrain_epochs", self.pretrain_epochs.to_string()),
            ("lr_decay", self.lr_decay.to_string()),
            ("lr_decay_every", self.lr_decay_every.to_string()),
            ("finetune_lr", format!("{:e}", self.finetune_lr)),
            ("finetune_epochs", self.finetune_epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("pairs_per_fiber", self.pairs_per_fiber.to_string()),
            ("gamma", self.gamma.to_string()),
            ("pca_components", self.pca_components.to_string()),
            ("geo.num_points", self.geometric.num_points.to_string()),
            ("geo.knn_k", self.geometric.knn_k.to_string()),
            ("geo.layer_widths", join(&self.geometric.layer_widths)),
            ("geo.embedding_dim", self.geometric.embedding_dim.to_string()),
            ("func.signal_len", self.functional.input_channels.to_string()),
            ("func.knn_k", self.functional.knn_k.to_string()),
            ("func.layer_widths", join(&self.functional.layer_widths)),
            ("func.embedding_dim", self.functional.embedding_dim.to_string()),
            ("synth.n_geo_clusters", self.synth.n_geo_clusters.to_string()),
            ("synth.n_func_per_geo", self.synth.n_func_per_geo.to_string()),
            ("synth.fibers_per_cluster", self.synth.fibers_per_cluster.to_string()),
            ("synth.geo_separation", self.synth.geo_separation.to_string()),
            ("synth.geo_jitter", self.synth.geo_jitter.to_string()),
            ("synth.signal_length", self.synth.signal_length.to_string()),
            ("synth.func_base_freqs", join(&self.synth.func_base_freqs)),
            ("synth.signal_noise_sd", self.synth.signal_noise_sd.to_string()),
            ("dataset", path(&self.dataset)),
            ("out", path(&self.out)),
        ];
        entries
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}
