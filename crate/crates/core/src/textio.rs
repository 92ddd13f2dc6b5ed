//! Shared numeric text encoding.
//!
//! Every real number written by this crate uses 17 significant digits in
//! scientific notation, which round-trips any `f64` exactly. Lines starting
//! with `#` are comments and blank lines are ignored on read.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Formats a value with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Joins values with single spaces using [`fmt_f64`].
pub fn fmt_row(values: impl IntoIterator<Item = f64>) -> String {
    let mut out = String::new();
    for (k, v) in values.into_iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{}", fmt_f64(v));
    }
    out
}

/// Non-comment, non-blank lines with their 1-based line numbers.
pub fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

pub(crate) fn parse_f64(tok: &str, file: &str, record: &str) -> Result<f64> {
    let v: f64 = tok.parse().map_err(|_| Error::Format {
        file: file.to_string(),
        record: record.to_string(),
        reason: format!("cannot parse {tok:?} as a real number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Format {
            file: file.to_string(),
            record: record.to_string(),
            reason: format!("non-finite value {tok:?}"),
        });
    }
    Ok(v)
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes a matrix as one text row per matrix row.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut text = format!("# matrix {} {}\n", m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        text.push_str(&fmt_row(m.row(r).iter().copied()));
        text.push('\n');
    }
    write_text(path, &text)
}

/// Reads a matrix written by [`write_matrix`] (or any whitespace table with
/// a constant column count).
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let name = path.display().to_string();
    let text = read_text(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line_no, line) in content_lines(&text) {
        let record = format!("line {line_no}");
        let row = line
            .split_whitespace()
            .map(|t| parse_f64(t, &name, &record))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Format {
                    file: name,
                    record,
                    reason: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format {
            file: name,
            record: "file".into(),
            reason: "empty matrix".into(),
        });
    }
    let ncols = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

/// Writes one non-negative integer per line.
pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut text = String::with_capacity(labels.len() * 3);
    for l in labels {
        let _ = writeln!(text, "{l}");
    }
    write_text(path, &text)
}

/// Reads one non-negative integer per line.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let name = path.display().to_string();
    let text = read_text(path)?;
    content_lines(&text)
        .map(|(line_no, line)| {
            line.parse::<usize>().map_err(|_| Error::Format {
                file: name.clone(),
                record: format!("line {line_no}"),
                reason: format!("cannot parse {line:?} as a label"),
            })
        })
        .collect()
}
