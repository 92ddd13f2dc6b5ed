//! Dataset model and the FSET v1 directory format.
//!
//! A dataset directory holds:
//!
//! - `meta.txt`: `format fset-v1`, `bundle <name>`, `n_fibers <N>`, `signal_length <T|0>`
//! - `fibers.txt`: per fiber a header `fiber <id> <m>` then `m` lines `x y z`
//! - `signals.txt` (optional): per fiber a header `signal <fiber_id>` then one
//!   line of `T` values for the first endpoint and one for the last endpoint
//! - `labels.txt` (optional): `N` lines of integer labels
//!
//! Fields are whitespace-delimited, `#` lines are comments. Reals are written
//! with 17 significant digits so a save/load round trip is bit-exact.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seeded_rng;
use crate::textio::{self, content_lines, fmt_row, parse_f64};

pub type Point3 = [f64; 3];

const META: &str = "meta.txt";
const FIBERS: &str = "fibers.txt";
const SIGNALS: &str = "signals.txt";
const LABELS: &str = "labels.txt";
const FORMAT_TAG: &str = "fset-v1";

/// One streamline: an ordered polyline in RAS millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct Fiber {
    pub id: u64,
    pub points: Vec<Point3>,
}

impl Fiber {
    pub fn new(id: u64, points: Vec<Point3>) -> Result<Self> {
        let f = Fiber { id, points };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 2 {
            return Err(Error::param(format!(
                "fiber {} has {} points, need at least 2",
                self.id,
                self.points.len()
            )));
        }
        if self.points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::param(format!(
                "fiber {} has non-finite coordinates",
                self.id
            )));
        }
        Ok(())
    }

    pub fn first(&self) -> Point3 {
        self.points[0]
    }

    pub fn last(&self) -> Point3 {
        self.points[self.points.len() - 1]
    }
}

/// BOLD time series sampled at a fiber's two endpoints. `series_a` belongs to
/// `points[0]`, `series_b` to the last point.
#[derive(Debug, Clone, PartialEq)]
pub struct EndpointSignals {
    pub fiber_id: u64,
    pub series_a: Vec<f64>,
    pub series_b: Vec<f64>,
}

impl EndpointSignals {
    pub fn new(fiber_id: u64, series_a: Vec<f64>, series_b: Vec<f64>) -> Result<Self> {
        let s = EndpointSignals {
            fiber_id,
            series_a,
            series_b,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.series_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series_a.is_empty()
    }

    /// Same signals with the endpoint roles exchanged.
    pub fn swapped(&self) -> Self {
        EndpointSignals {
            fiber_id: self.fiber_id,
            series_a: self.series_b.clone(),
            series_b: self.series_a.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.series_a.len() != self.series_b.len() {
            return Err(Error::param(format!(
                "signals of fiber {}: endpoint lengths {} and {} differ",
                self.fiber_id,
                self.series_a.len(),
                self.series_b.len()
            )));
        }
        if self.series_a.len() < 2 {
            return Err(Error::param(format!(
                "signals of fiber {}: length {} < 2",
                self.fiber_id,
                self.series_a.len()
            )));
        }
        if self
            .series_a
            .iter()
            .chain(&self.series_b)
            .any(|v| !v.is_finite())
        {
            return Err(Error::param(format!(
                "signals of fiber {} contain non-finite values",
                self.fiber_id
            )));
        }
        Ok(())
    }
}

/// One bundle of fibers with optional endpoint signals and ground truth.
///
/// When present, `signals()[k]` belongs to `fibers()[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberSet {
    fibers: Vec<Fiber>,
    signals: Option<Vec<EndpointSignals>>,
    bundle_name: String,
    true_labels: Option<Vec<usize>>,
}

impl FiberSet {
    pub fn new(
        bundle_name: impl Into<String>,
        fibers: Vec<Fiber>,
        signals: Option<Vec<EndpointSignals>>,
        true_labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let fs = FiberSet {
            fibers,
            signals,
            bundle_name: bundle_name.into(),
            true_labels,
        };
        fs.validate()?;
        Ok(fs)
    }

    fn validate(&self) -> Result<()> {
        let mut ids = HashSet::with_capacity(self.fibers.len());
        for f in &self.fibers {
            f.validate()?;
            if !ids.insert(f.id) {
                return Err(Error::param(format!("duplicate fiber id {}", f.id)));
            }
        }
        if let Some(signals) = &self.signals {
            if signals.len() != self.fibers.len() {
                return Err(Error::param(format!(
                    "{} signal records for {} fibers",
                    signals.len(),
                    self.fibers.len()
                )));
            }
            let t = signals.first().map(EndpointSignals::len);
            for (s, f) in signals.iter().zip(&self.fibers) {
                s.validate()?;
                if s.fiber_id != f.id {
                    return Err(Error::param(format!(
                        "signal record for fiber {} where fiber {} was expected",
                        s.fiber_id, f.id
                    )));
                }
                if Some(s.len()) != t {
                    return Err(Error::param(format!(
                        "signals of fiber {} have length {}, expected {}",
                        s.fiber_id,
                        s.len(),
                        t.unwrap_or(0)
                    )));
                }
            }
        }
        if let Some(labels) = &self.true_labels {
            if labels.len() != self.fibers.len() {
                return Err(Error::param(format!(
                    "{} labels for {} fibers",
                    labels.len(),
                    self.fibers.len()
                )));
            }
        }
        Ok(())
    }

    pub fn fibers(&self) -> &[Fiber] {
        &self.fibers
    }

    pub fn signals(&self) -> Option<&[EndpointSignals]> {
        self.signals.as_deref()
    }

    pub fn bundle_name(&self) -> &str {
        &self.bundle_name
    }

    pub fn true_labels(&self) -> Option<&[usize]> {
        self.true_labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.fibers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fibers.is_empty()
    }

    /// Signal length `T`, or 0 when the set carries no signals.
    pub fn signal_length(&self) -> usize {
        self.signals
            .as_ref()
            .and_then(|s| s.first())
            .map_or(0, EndpointSignals::len)
    }

    /// Fibers (and their signals and labels) at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<FiberSet> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::param(format!(
                "index {bad} out of range for {} fibers",
                self.len()
            )));
        }
        FiberSet::new(
            self.bundle_name.clone(),
            indices.iter().map(|&i| self.fibers[i].clone()).collect(),
            self.signals
                .as_ref()
                .map(|s| indices.iter().map(|&i| s[i].clone()).collect()),
            self.true_labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        )
    }
}

fn format_err(file: &str, record: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Format {
        file: file.to_string(),
        record: record.into(),
        reason: reason.into(),
    }
}

/// Loads an FSET v1 dataset directory.
pub fn load_fiberset(path: &Path) -> Result<FiberSet> {
    let not_a_dataset = |reason: &str| Error::NotADataset {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if !path.is_dir() {
        return Err(not_a_dataset("not a directory"));
    }
    let meta_path = path.join(META);
    let fibers_path = path.join(FIBERS);
    if !meta_path.is_file() {
        return Err(not_a_dataset("missing meta.txt"));
    }
    if !fibers_path.is_file() {
        return Err(not_a_dataset("missing fibers.txt"));
    }

    let meta = parse_meta(&textio::read_text(&meta_path)?)?;
    let fibers = parse_fibers(&textio::read_text(&fibers_path)?)?;
    if fibers.len() != meta.n_fibers {
        return Err(format_err(
            FIBERS,
            "file",
            format!(
                "meta.txt declares {} fibers, fibers.txt has {}",
                meta.n_fibers,
                fibers.len()
            ),
        ));
    }
    let mut seen = HashSet::new();
    for f in &fibers {
        if !seen.insert(f.id) {
            return Err(format_err(FIBERS, format!("fiber {}", f.id), "duplicate id"));
        }
    }

    let signals_path = path.join(SIGNALS);
    let signals = if signals_path.is_file() {
        let signals = parse_signals(&textio::read_text(&signals_path)?)?;
        if signals.len() != fibers.len() {
            return Err(format_err(
                SIGNALS,
                "file",
                format!("{} signal records for {} fibers", signals.len(), fibers.len()),
            ));
        }
        for (s, f) in signals.iter().zip(&fibers) {
            if s.fiber_id != f.id {
                return Err(format_err(
                    SIGNALS,
                    format!("signal {}", s.fiber_id),
                    format!("expected signals for fiber {}", f.id),
                ));
            }
            if s.len() != meta.signal_length {
                return Err(format_err(
                    SIGNALS,
                    format!("signal {}", s.fiber_id),
                    format!(
                        "length {} differs from signal_length {}",
                        s.len(),
                        meta.signal_length
                    ),
                ));
            }
        }
        Some(signals)
    } else {
        if meta.signal_length != 0 {
            return Err(format_err(
                META,
                "signal_length",
                format!(
                    "declares signal_length {} but signals.txt is missing",
                    meta.signal_length
                ),
            ));
        }
        None
    };

    let labels_path = path.join(LABELS);
    let true_labels = if labels_path.is_file() {
        let labels = textio::read_labels(&labels_path).map_err(|e| match e {
            Error::Format { record, reason, .. } => format_err(LABELS, record, reason),
            other => other,
        })?;
        if labels.len() != fibers.len() {
            return Err(format_err(
                LABELS,
                "file",
                format!("{} labels for {} fibers", labels.len(), fibers.len()),
            ));
        }
        Some(labels)
    } else {
        None
    };

    FiberSet::new(meta.bundle, fibers, signals, true_labels)
}

struct Meta {
    bundle: String,
    n_fibers: usize,
    signal_length: usize,
}

fn parse_count(tok: Option<&str>, file: &str, record: &str) -> Result<usize> {
    let tok = tok.ok_or_else(|| format_err(file, record, "missing value"))?;
    tok.parse()
        .map_err(|_| format_err(file, record, format!("cannot parse {tok:?} as a count")))
}

fn parse_meta(text: &str) -> Result<Meta> {
    let mut format = None;
    let mut bundle = None;
    let mut n_fibers = None;
    let mut signal_length = None;
    for (line_no, line) in content_lines(text) {
        let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        let record = format!("line {line_no} ({key})");
        match key {
            "format" => format = Some(rest.to_string()),
            "bundle" => bundle = Some(rest.to_string()),
            "n_fibers" => n_fibers = Some(parse_count(Some(rest), META, &record)?),
            "signal_length" => signal_length = Some(parse_count(Some(rest), META, &record)?),
            _ => return Err(format_err(META, record, "unknown key")),
        }
    }
    match format.as_deref() {
        Some(FORMAT_TAG) => {}
        Some(other) => {
            return Err(format_err(
                META,
                "format",
                format!("unsupported format {other:?}"),
            ))
        }
        None => return Err(format_err(META, "format", "missing format line")),
    }
    let signal_length = signal_length.ok_or_else(|| format_err(META, "signal_length", "missing"))?;
    if signal_length == 1 {
        return Err(format_err(META, "signal_length", "must be 0 or at least 2"));
    }
    Ok(Meta {
        bundle: bundle.ok_or_else(|| format_err(META, "bundle", "missing"))?,
        n_fibers: n_fibers.ok_or_else(|| format_err(META, "n_fibers", "missing"))?,
        signal_length,
    })
}

fn parse_fibers(text: &str) -> Result<Vec<Fiber>> {
    let mut lines = content_lines(text);
    let mut fibers = Vec::new();
    while let Some((line_no, header)) = lines.next() {
        let mut toks = header.split_whitespace();
        if toks.next() != Some("fiber") {
            return Err(format_err(
                FIBERS,
                format!("line {line_no}"),
                "expected `fiber <id> <m>` header",
            ));
        }
        let record = format!("line {line_no}");
        let id_tok = toks.next();
        let id: u64 = id_tok
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| format_err(FIBERS, &record, "bad fiber id"))?;
        let record = format!("fiber {id}");
        let m = parse_count(toks.next(), FIBERS, &record)?;
        if toks.next().is_some() {
            return Err(format_err(FIBERS, &record, "trailing tokens in header"));
        }
        if m < 2 {
            return Err(format_err(FIBERS, &record, format!("{m} points, need at least 2")));
        }
        let mut points = Vec::with_capacity(m);
        for k in 0..m {
            let (_, line) = lines
                .next()
                .ok_or_else(|| format_err(FIBERS, &record, format!("truncated after {k} points")))?;
            let vals = line
                .split_whitespace()
                .map(|t| parse_f64(t, FIBERS, &record))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != 3 {
                return Err(format_err(
                    FIBERS,
                    &record,
                    format!("point {k} has {} coordinates", vals.len()),
                ));
            }
            points.push([vals[0], vals[1], vals[2]]);
        }
        fibers.push(Fiber { id, points });
    }
    Ok(fibers)
}

fn parse_signals(text: &str) -> Result<Vec<EndpointSignals>> {
    let mut lines = content_lines(text);
    let mut out = Vec::new();
    while let Some((line_no, header)) = lines.next() {
        let mut toks = header.split_whitespace();
        if toks.next() != Some("signal") {
            return Err(format_err(
                SIGNALS,
                format!("line {line_no}"),
                "expected `signal <fiber_id>` header",
            ));
        }
        let fiber_id: u64 = toks
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| format_err(SIGNALS, format!("line {line_no}"), "bad fiber id"))?;
        let record = format!("signal {fiber_id}");
        let mut series = |which: &str| -> Result<Vec<f64>> {
            let (_, line) = lines
                .next()
                .ok_or_else(|| format_err(SIGNALS, &record, format!("missing {which} series")))?;
            line.split_whitespace()
                .map(|t| parse_f64(t, SIGNALS, &record))
                .collect()
        };
        let series_a = series("first")?;
        let series_b = series("second")?;
        let s = EndpointSignals {
            fiber_id,
            series_a,
            series_b,
        };
        s.validate()
            .map_err(|e| format_err(SIGNALS, &record, e.to_string()))?;
        out.push(s);
    }
    Ok(out)
}

/// Writes `fs` as an FSET v1 directory, replacing any previous dataset there.
pub fn save_fiberset(fs: &FiberSet, path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;

    let meta = format!(
        "format {FORMAT_TAG}\nbundle {}\nn_fibers {}\nsignal_length {}\n",
        fs.bundle_name,
        fs.len(),
        fs.signal_length()
    );
    textio::write_text(&path.join(META), &meta)?;

    let mut text = String::new();
    for f in &fs.fibers {
        let _ = writeln!(text, "fiber {} {}", f.id, f.points.len());
        for p in &f.points {
            text.push_str(&fmt_row(p.iter().copied()));
            text.push('\n');
        }
    }
    textio::write_text(&path.join(FIBERS), &text)?;

    let signals_path = path.join(SIGNALS);
    match &fs.signals {
        Some(signals) => {
            let mut text = String::new();
            for s in signals {
                let _ = writeln!(text, "signal {}", s.fiber_id);
                text.push_str(&fmt_row(s.series_a.iter().copied()));
                text.push('\n');
                text.push_str(&fmt_row(s.series_b.iter().copied()));
                text.push('\n');
            }
            textio::write_text(&signals_path, &text)?;
        }
        None => remove_if_present(&signals_path)?,
    }

    let labels_path = path.join(LABELS);
    match &fs.true_labels {
        Some(labels) => textio::write_labels(&labels_path, labels)?,
        None => remove_if_present(&labels_path)?,
    }
    Ok(())
}

fn remove_if_present(path: &Path) -> Result<()> {
    match fs::remove_file(path) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(Error::io(path, e)),
    }
}

/// Shuffles `items` with `seed` and splits off the first
/// `round(train_fraction * len)` as the training part.
pub fn split_dataset<T: Clone>(
    items: &[T],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    if items.is_empty() {
        return Err(Error::param("cannot split an empty dataset list"));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::param(format!(
            "train_fraction {train_fraction} outside (0, 1)"
        )));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut seeded_rng(seed, 0x5711_7000));
    let n_train = (train_fraction * items.len() as f64).round() as usize;
    let train = order[..n_train].iter().map(|&i| items[i].clone()).collect();
    let test = order[n_train..].iter().map(|&i| items[i].clone()).collect();
    Ok((train, test))
}
