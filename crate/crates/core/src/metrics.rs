//! Partition agreement scores.

use std::collections::HashMap;

use crate::error::{Error, Result};

struct Contingency {
    n: f64,
    cells: Vec<f64>,
    rows: Vec<f64>,
    cols: Vec<f64>,
}

fn contingency(a: &[usize], b: &[usize]) -> Result<Contingency> {
    if a.len() != b.len() {
        return Err(Error::param(format!(
            "label lists differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::param("empty label lists"));
    }
    let mut cells: HashMap<(usize, usize), usize> = HashMap::new();
    let mut rows: HashMap<usize, usize> = HashMap::new();
    let mut cols: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *cells.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    Ok(Contingency {
        n: a.len() as f64,
        cells: sorted_counts(cells),
        rows: sorted_counts(rows),
        cols: sorted_counts(cols),
    })
}

fn sorted_counts<K: Ord>(m: HashMap<K, usize>) -> Vec<f64> {
    let mut v: Vec<_> = m.into_iter().collect();
    v.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    v.into_iter().map(|(_, c)| c as f64).collect()
}

fn comb2(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index. Two single-cluster (or two all-singleton)
/// partitions agree perfectly and score 1.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = contingency(a, b)?;
    let index: f64 = t.cells.iter().map(|&c| comb2(c)).sum();
    let sum_a: f64 = t.rows.iter().map(|&c| comb2(c)).sum();
    let sum_b: f64 = t.cols.iter().map(|&c| comb2(c)).sum();
    let expected = sum_a * sum_b / comb2(t.n);
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

fn entropy(counts: &[f64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| -(c / n) * (c / n).ln())
        .sum()
}

/// Normalised mutual information with the arithmetic-mean normaliser
/// `I / ((H(a) + H(b)) / 2)`. Two trivial partitions score 1.
pub fn normalized_mutual_info(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = contingency(a, b)?;
    let n = t.n;
    let ha = entropy(&t.rows, n);
    let hb = entropy(&t.cols, n);
    let mut row_of: HashMap<usize, f64> = HashMap::new();
    let mut col_of: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *row_of.entry(x).or_default() += 1.0;
        *col_of.entry(y).or_default() += 1.0;
    }
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0;
    }
    let mut keys: Vec<_> = joint.keys().copied().collect();
    keys.sort_unstable();
    let mi: f64 = keys
        .iter()
        .map(|k| {
            let c = joint[k];
            (c / n) * (c * n / (row_of[&k.0] * col_of[&k.1])).ln()
        })
        .sum();
    let denom = (ha + hb) / 2.0;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}
