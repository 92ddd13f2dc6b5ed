//! `dmvfc` command-line driver.

mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use dmvfc::config::RunConfig;
use dmvfc::fiberset::{load_fiberset, save_fiberset, FiberSet};
use dmvfc::geometry::{quickbundles, DEFAULT_NUM_POINTS};
use dmvfc::inference::{compare_methods, predict, PredictView};
use dmvfc::pipeline::{
    finetune_both, geometric_inputs, load_encoders, load_view_models, pretrain_both,
    resolve_clusters, save_encoders, save_prediction, save_view_models, write_config, write_run_files,
    PreparedViews, FINETUNE_DIR, PRETRAIN_DIR,
};
use dmvfc::synthetic::{generate, preset};
use dmvfc::textio::{read_labels, write_labels};

#[derive(Parser, Debug)]
#[command(name = "dmvfc", version, about = "Deep multi-view fiber clustering")]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// key=value run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic FSET v1 dataset.
    Generate(GenerateArgs),
    /// Pretrain both view encoders.
    Pretrain(PretrainArgs),
    /// Initialise centroids and fine-tune both views together.
    Finetune(FinetuneArgs),
    /// Predict cluster labels with trained models.
    Cluster(ClusterArgs),
    /// Score one or more labellings and write report.csv.
    Evaluate(EvaluateArgs),
    /// QuickBundles baseline clustering.
    Qb(QbArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// easy, func-only or geo-only. Without it the config's synth.* keys apply.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    fibers_per_cluster: Option<usize>,
    #[arg(long)]
    geo_jitter: Option<f64>,
    #[arg(long)]
    signal_noise_sd: Option<f64>,
    #[arg(long)]
    signal_length: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainFlags {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Cluster count (defaults to the number of ground-truth labels).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Write and print the resolved configuration without training.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args, Debug)]
struct PretrainArgs {
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args, Debug)]
struct FinetuneArgs {
    #[command(flatten)]
    train: TrainFlags,
    /// Run directory written by `pretrain`.
    #[arg(long)]
    pretrained: PathBuf,
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Args, Debug)]
struct ClusterArgs {
    #[arg(long)]
    data: PathBuf,
    /// Run directory written by `finetune`.
    #[arg(long)]
    model: PathBuf,
    /// fused, geometric or functional.
    #[arg(long, default_value = "fused")]
    view: String,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    /// NAME=DIR, where DIR holds a labels.txt. Repeatable.
    #[arg(long = "pred", required = true)]
    preds: Vec<String>,
    /// Write one SVG per cluster of the first labelling.
    #[arg(long)]
    plot: bool,
}

#[derive(Args, Debug)]
struct QbArgs {
    #[arg(long)]
    data: PathBuf,
    /// Distance threshold in millimeters.
    #[arg(long)]
    threshold: f64,
}

/// Usage errors exit with 2, everything else with 1.
enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(n) = std::env::var("DMVFC_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: DMVFC_THREADS must be a positive integer, got {n:?}");
                return ExitCode::from(2);
            }
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nRun `dmvfc --help` for usage.");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> CmdResult {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| usage("--out is required"))?;
    cfg.out = Some(out.clone());
    match cli.command {
        Command::Generate(a) => cmd_generate(cfg, &out, a),
        Command::Pretrain(a) => cmd_pretrain(cfg, &out, a),
        Command::Finetune(a) => cmd_finetune(cfg, &out, a),
        Command::Cluster(a) => cmd_cluster(&out, a),
        Command::Evaluate(a) => cmd_evaluate(&out, a),
        Command::Qb(a) => cmd_qb(&out, a),
    }
}

fn cmd_generate(mut cfg: RunConfig, out: &Path, a: GenerateArgs) -> CmdResult {
    let mut synth = match &a.preset {
        Some(name) => preset(name, cfg.seed).map_err(|e| usage(e.to_string()))?,
        None => {
            let mut s = cfg.synth.clone();
            s.seed = cfg.seed;
            s
        }
    };
    if let Some(v) = a.fibers_per_cluster {
        synth.fibers_per_cluster = v;
    }
    if let Some(v) = a.geo_jitter {
        synth.geo_jitter = v;
    }
    if let Some(v) = a.signal_noise_sd {
        synth.signal_noise_sd = v;
    }
    if let Some(v) = a.signal_length {
        synth.signal_length = v;
    }
    synth.validate().map_err(|e| usage(e.to_string()))?;
    cfg.synth = synth;
    let fs = generate(&cfg.synth)?;
    save_fiberset(&fs, out)?;
    println!(
        "wrote {} fibers ({} clusters) to {}",
        fs.len(),
        cfg.synth.n_clusters(),
        out.display()
    );
    Ok(())
}

/// Applies the shared training flags; `epochs`/`lr` target the given stage.
fn apply_train_flags(cfg: &mut RunConfig, t: &TrainFlags, finetune: bool) -> CmdResult {
    if let Some(k) = t.k {
        cfg.n_clusters = Some(k);
    }
    if let Some(e) = t.epochs {
        if finetune {
            cfg.finetune_epochs = e;
        } else {
            cfg.pretrain_epochs = e;
        }
    }
    if let Some(lr) = t.lr {
        if finetune {
            cfg.finetune_lr = lr;
        } else {
            cfg.pretrain_lr = lr;
        }
    }
    if let Some(b) = t.batch_size {
        cfg.batch_size = b;
    }
    cfg.dataset = Some(t.data.clone());
    cfg.validate().map_err(|e| usage(e.to_string()))
}

fn load_data(path: &Path) -> anyhow::Result<FiberSet> {
    load_fiberset(path).with_context(|| format!("cannot load dataset {}", path.display()))
}

fn cmd_pretrain(mut cfg: RunConfig, out: &Path, a: PretrainArgs) -> CmdResult {
    apply_train_flags(&mut cfg, &a.train, false)?;
    let fs = load_data(&a.train.data)?;
    let k = resolve_clusters(&cfg, &fs)?;
    if a.train.dry_run {
        print!("{}", write_config(out, &cfg, k)?);
        return Ok(());
    }
    let tc = cfg.train_config(k);
    let views = PreparedViews::new(&fs, &cfg)?;
    let pre = pretrain_both(&cfg, &tc, &views)?;
    save_encoders(&out.join(PRETRAIN_DIR), &pre.geometric, &pre.functional)?;
    write_run_files(out, &cfg, k, &pre.log)?;
    if let Some(last) = pre.log.last() {
        println!("pretrained {} epochs; final {} L_s {:.6}", last.epoch, last.view.name(), last.l_s);
    }
    Ok(())
}

fn cmd_finetune(mut cfg: RunConfig, out: &Path, a: FinetuneArgs) -> CmdResult {
    if let Some(g) = a.gamma {
        cfg.gamma = g;
    }
    apply_train_flags(&mut cfg, &a.train, true)?;
    let fs = load_data(&a.train.data)?;
    let k = resolve_clusters(&cfg, &fs)?;
    let pre_dir = a.pretrained.join(PRETRAIN_DIR);
    let (geo, func) = load_encoders(&pre_dir, &cfg)?;
    if a.train.dry_run {
        print!("{}", write_config(out, &cfg, k)?);
        return Ok(());
    }
    let tc = cfg.train_config(k);
    let views = PreparedViews::new(&fs, &cfg)?;
    let ft = finetune_both(&tc, geo, func, &views, None)?;
    save_view_models(&out.join(FINETUNE_DIR), &ft.geometric, &ft.functional)?;
    write_run_files(out, &cfg, k, &ft.log)?;
    println!("fine-tuned {} epochs with K = {k}", cfg.finetune_epochs);
    Ok(())
}

fn cmd_cluster(out: &Path, a: ClusterArgs) -> CmdResult {
    let view: PredictView = a.view.parse().map_err(|e: dmvfc::Error| usage(e.to_string()))?;
    let fs = load_data(&a.data)?;
    let (vm1, vm2) = load_view_models(&a.model.join(FINETUNE_DIR))?;
    let pred = predict(&vm1, &vm2, &fs, view)?;
    save_prediction(out, &pred.labels, &pred)?;
    println!("wrote {} labels to {}", pred.labels.len(), out.display());
    Ok(())
}

fn parse_pred(arg: &str) -> Result<(String, PathBuf), Failure> {
    match arg.split_once('=') {
        Some((name, dir)) if !name.is_empty() && !dir.is_empty() => {
            Ok((name.to_string(), PathBuf::from(dir)))
        }
        _ => Err(usage(format!("--pred expects NAME=DIR, got {arg:?}"))),
    }
}

fn cmd_evaluate(out: &Path, a: EvaluateArgs) -> CmdResult {
    let specs = a
        .preds
        .iter()
        .map(|s| parse_pred(s))
        .collect::<Result<Vec<_>, _>>()?;
    let fs = load_data(&a.data)?;
    let mut labellings = Vec::with_capacity(specs.len());
    for (name, dir) in &specs {
        let labels = read_labels(&dir.join("labels.txt"))
            .with_context(|| format!("cannot read labels for {name}"))?;
        labellings.push((name.clone(), labels));
    }
    let methods: Vec<(&str, &[usize])> = labellings
        .iter()
        .map(|(n, l)| (n.as_str(), l.as_slice()))
        .collect();
    let table = compare_methods(&fs, &methods)?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    fs::write(out.join("report.csv"), table.to_csv())
        .with_context(|| format!("cannot write {}", out.join("report.csv").display()))?;
    print!("{}", table.to_text());
    if a.plot {
        let (name, labels) = &labellings[0];
        let written = plot::write_cluster_plots(&fs, labels, &out.join("plots"), name)?;
        println!("wrote {written} plots to {}", out.join("plots").display());
    }
    Ok(())
}

fn cmd_qb(out: &Path, a: QbArgs) -> CmdResult {
    if !(a.threshold > 0.0 && a.threshold.is_finite()) {
        return Err(usage(format!("--threshold must be positive, got {}", a.threshold)));
    }
    let fs = load_data(&a.data)?;
    let (resampled, _) = geometric_inputs(&fs, DEFAULT_NUM_POINTS)?;
    let model = quickbundles(&resampled, a.threshold)?;
    let ids: Vec<u64> = fs.fibers().iter().map(|f| f.id).collect();
    let labels = model.labels_for(&ids)?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    write_labels(&out.join("labels.txt"), &labels)?;
    if model.n_clusters() == 0 {
        return Err(anyhow!("QuickBundles produced no clusters").into());
    }
    println!("{} clusters at threshold {} mm", model.n_clusters(), a.threshold);
    Ok(())
}
