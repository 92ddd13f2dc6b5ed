//! Fused prediction, per-cluster evaluation and method comparison.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::encoder::PointCloud;
use crate::error::{Error, Result};
use crate::fiberset::FiberSet;
use crate::functional::cluster_pearson;
use crate::geometry::{alpha_metric, resample, ResampledFiber, DEFAULT_NUM_POINTS};
use crate::metrics::{adjusted_rand_index, normalized_mutual_info};
use crate::pipeline::{functional_inputs, geometric_inputs};
use crate::training::ViewModel;

/// Which soft assignment drives the hard labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictView {
    Fused,
    Geometric,
    Functional,
}

impl FromStr for PredictView {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fused" => Ok(PredictView::Fused),
            "geometric" => Ok(PredictView::Geometric),
            "functional" => Ok(PredictView::Functional),
            other => Err(Error::param(format!(
                "unknown view {other:?} (expected fused, geometric or functional)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPrediction {
    pub labels: Vec<usize>,
    /// `(Q¹ + Q²) / 2`.
    pub fused_q: DMatrix<f64>,
    pub per_view_q: [DMatrix<f64>; 2],
}

impl ClusterPrediction {
    /// Row argmax of the chosen assignment matrix.
    pub fn labels_for(&self, view: PredictView) -> Vec<usize> {
        argmax_rows(self.matrix(view))
    }

    pub fn matrix(&self, view: PredictView) -> &DMatrix<f64> {
        match view {
            PredictView::Fused => &self.fused_q,
            PredictView::Geometric => &self.per_view_q[0],
            PredictView::Functional => &self.per_view_q[1],
        }
    }
}

/// Row argmax, ties to the lowest column.
pub fn argmax_rows(q: &DMatrix<f64>) -> Vec<usize> {
    (0..q.nrows())
        .map(|r| {
            let mut best = 0;
            for c in 1..q.ncols() {
                if q[(r, c)] > q[(r, best)] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Combines per-view assignments; labels follow `view`.
pub fn fuse(q1: DMatrix<f64>, q2: DMatrix<f64>, view: PredictView) -> Result<ClusterPrediction> {
    if q1.shape() != q2.shape() {
        return Err(Error::Model(format!(
            "view assignments differ in shape: {:?} vs {:?}",
            q1.shape(),
            q2.shape()
        )));
    }
    let fused_q = (&q1 + &q2) * 0.5;
    let mut pred = ClusterPrediction {
        labels: Vec::new(),
        fused_q,
        per_view_q: [q1, q2],
    };
    pred.labels = pred.labels_for(view);
    Ok(pred)
}

/// Prediction from already prepared view inputs.
pub fn predict_inputs(
    vm1: &ViewModel,
    vm2: &ViewModel,
    geo: &[PointCloud],
    func: &[PointCloud],
    view: PredictView,
) -> Result<ClusterPrediction> {
    if vm1.n_clusters() != vm2.n_clusters() {
        return Err(Error::Model(format!(
            "views disagree on K: {} vs {}",
            vm1.n_clusters(),
            vm2.n_clusters()
        )));
    }
    let q1 = vm1.soft_assign(geo)?;
    let q2 = vm2.soft_assign(func)?;
    fuse(q1.matrix().clone(), q2.matrix().clone(), view)
}

/// Clusters a fiber set with both trained views.
pub fn predict(
    vm1: &ViewModel,
    vm2: &ViewModel,
    fs: &FiberSet,
    view: PredictView,
) -> Result<ClusterPrediction> {
    if fs.signals().is_none() {
        return Err(Error::Input(format!(
            "bundle {} has no endpoint signals",
            fs.bundle_name()
        )));
    }
    if vm1.n_clusters() != vm2.n_clusters() {
        return Err(Error::Model(format!(
            "views disagree on K: {} vs {}",
            vm1.n_clusters(),
            vm2.n_clusters()
        )));
    }
    let (_, geo) = geometric_inputs(fs, vm1.encoder.config().num_points)?;
    let func = functional_inputs(fs, vm2.encoder.config().input_channels)?;
    predict_inputs(vm1, vm2, &geo, &func, view)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Occupied cluster labels, ascending; the per-cluster vectors follow this order.
    pub clusters: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Absent for singletons and when the set has no signals.
    pub per_cluster_pearson: Vec<Option<f64>>,
    pub per_cluster_alpha: Vec<f64>,
    /// Mean over clusters with at least two members.
    pub mean_pearson: Option<f64>,
    /// Mean over all clusters, singletons counting as 0.
    pub mean_alpha: f64,
    pub ari: Option<f64>,
    pub nmi: Option<f64>,
}

/// Groups fiber indices by label, ascending by label.
pub fn members_by_label(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    groups
}

/// Per-cluster α and Pearson of a labelling, plus agreement with the
/// ground truth when it exists.
pub fn evaluate(labels: &[usize], fs: &FiberSet) -> Result<EvalReport> {
    if labels.is_empty() {
        return Err(Error::param("empty prediction"));
    }
    if labels.len() != fs.len() {
        return Err(Error::param(format!(
            "{} labels for {} fibers",
            labels.len(),
            fs.len()
        )));
    }
    let resampled: Vec<ResampledFiber> = fs
        .fibers()
        .iter()
        .map(|f| resample(f, DEFAULT_NUM_POINTS))
        .collect::<Result<_>>()?;
    let groups = members_by_label(labels);
    let mut report = EvalReport {
        clusters: Vec::with_capacity(groups.len()),
        sizes: Vec::with_capacity(groups.len()),
        per_cluster_pearson: Vec::with_capacity(groups.len()),
        per_cluster_alpha: Vec::with_capacity(groups.len()),
        mean_pearson: None,
        mean_alpha: 0.0,
        ari: None,
        nmi: None,
    };
    for (&label, members) in &groups {
        let fibers: Vec<ResampledFiber> = members.iter().map(|&i| resampled[i].clone()).collect();
        report.clusters.push(label);
        report.sizes.push(members.len());
        report.per_cluster_alpha.push(alpha_metric(&fibers)?);
        let pearson = match fs.signals() {
            Some(sig) if members.len() >= 2 => {
                let refs: Vec<_> = members.iter().map(|&i| &sig[i]).collect();
                Some(cluster_pearson(&refs)?)
            }
            _ => None,
        };
        report.per_cluster_pearson.push(pearson);
    }
    let ps: Vec<f64> = report.per_cluster_pearson.iter().flatten().copied().collect();
    if !ps.is_empty() {
        report.mean_pearson = Some(ps.iter().sum::<f64>() / ps.len() as f64);
    }
    report.mean_alpha =
        report.per_cluster_alpha.iter().sum::<f64>() / report.per_cluster_alpha.len() as f64;
    if let Some(truth) = fs.true_labels() {
        report.ari = Some(adjusted_rand_index(labels, truth)?);
        report.nmi = Some(normalized_mutual_info(labels, truth)?);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub method: String,
    pub bundle: String,
    pub n_clusters: usize,
    pub mean_pearson: Option<f64>,
    pub mean_alpha: f64,
    pub ari: Option<f64>,
    pub nmi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub has_truth: bool,
}

fn opt_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl Comparison {
    fn header(&self) -> Vec<&'static str> {
        let mut h = vec!["method", "bundle", "mean_pearson", "mean_alpha"];
        if self.has_truth {
            h.extend(["ari", "nmi"]);
        }
        h
    }

    fn cells(&self, r: &ComparisonRow) -> Vec<String> {
        let mut c = vec![
            r.method.clone(),
            r.bundle.clone(),
            opt_cell(r.mean_pearson),
            format!("{:.6}", r.mean_alpha),
        ];
        if self.has_truth {
            c.push(opt_cell(r.ari));
            c.push(opt_cell(r.nmi));
        }
        c
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header().join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&self.cells(r).join(","));
            out.push('\n');
        }
        out
    }

    /// Column-aligned rendering for terminals.
    pub fn to_text(&self) -> String {
        let header: Vec<String> = self.header().iter().map(|s| s.to_string()).collect();
        let body: Vec<Vec<String>> = self.rows.iter().map(|r| self.cells(r)).collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|c| {
                body.iter()
                    .map(|row| row[c].len())
                    .chain([header[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for row in std::iter::once(&header).chain(&body) {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }
}

/// Evaluates each named labelling of the same fiber set.
pub fn compare_methods(fs: &FiberSet, methods: &[(&str, &[usize])]) -> Result<Comparison> {
    let mut rows = Vec::with_capacity(methods.len());
    for (name, labels) in methods {
        if labels.len() != fs.len() {
            return Err(Error::param(format!(
                "method {name}: {} labels for {} fibers",
                labels.len(),
                fs.len()
            )));
        }
        let rep = evaluate(labels, fs)?;
        rows.push(ComparisonRow {
            method: name.to_string(),
            bundle: fs.bundle_name().to_string(),
            n_clusters: rep.clusters.len(),
            mean_pearson: rep.mean_pearson,
            mean_alpha: rep.mean_alpha,
            ari: rep.ari,
            nmi: rep.nmi,
        });
    }
    Ok(Comparison {
        rows,
        has_truth: fs.true_labels().is_some(),
    })
}
