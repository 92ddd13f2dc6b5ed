//! Static SVG cluster views: fibers projected on the two widest axes of the
//! bundle, coloured by each fiber's mean endpoint correlation with the rest
//! of its cluster.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Context;

use dmvfc::fiberset::FiberSet;
use dmvfc::functional::fiber_coherence;
use dmvfc::inference::members_by_label;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 20.0;

/// Blue (-1) through grey (0) to red (+1).
fn colour(r: f64) -> String {
    let t = r.clamp(-1.0, 1.0);
    let (lo, mid, hi) = ([40.0, 80.0, 200.0], [170.0, 170.0, 170.0], [210.0, 40.0, 40.0]);
    let (a, b, u) = if t < 0.0 { (mid, lo, -t) } else { (mid, hi, t) };
    let c: Vec<u8> = (0..3).map(|i| (a[i] + (b[i] - a[i]) * u).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn widest_axes(fs: &FiberSet) -> (usize, usize) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in fs.fibers().iter().flat_map(|f| &f.points) {
        for d in 0..3 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let mut axes = [0usize, 1, 2];
    axes.sort_by(|&a, &b| (hi[b] - lo[b]).total_cmp(&(hi[a] - lo[a])).then(a.cmp(&b)));
    (axes[0], axes[1])
}

/// Writes `<prefix>_cluster<label>.svg` for every cluster; returns the count.
pub fn write_cluster_plots(
    fs: &FiberSet,
    labels: &[usize],
    dir: &Path,
    prefix: &str,
) -> anyhow::Result<usize> {
    anyhow::ensure!(labels.len() == fs.len(), "{} labels for {} fibers", labels.len(), fs.len());
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let (ax, ay) = widest_axes(fs);
    let all = fs.fibers().iter().flat_map(|f| &f.points);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in all {
        x0 = x0.min(p[ax]);
        x1 = x1.max(p[ax]);
        y0 = y0.min(p[ay]);
        y1 = y1.max(p[ay]);
    }
    let scale = (SIZE - 2.0 * MARGIN) / (x1 - x0).max(y1 - y0).max(1e-9);
    let groups = members_by_label(labels);
    for (label, members) in &groups {
        let coherence = match fs.signals() {
            Some(sig) if members.len() >= 2 => {
                let refs: Vec<_> = members.iter().map(|&i| &sig[i]).collect();
                fiber_coherence(&refs)?
            }
            _ => vec![0.0; members.len()],
        };
        let mut svg = String::new();
        writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
        )?;
        writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
        writeln!(
            svg,
            r#"<text x="{MARGIN}" y="14" font-family="sans-serif" font-size="12">{prefix} cluster {label} ({} fibers)</text>"#,
            members.len()
        )?;
        for (&i, &r) in members.iter().zip(&coherence) {
            let pts: Vec<String> = fs.fibers()[i]
                .points
                .iter()
                .map(|p| {
                    let x = MARGIN + (p[ax] - x0) * scale;
                    let y = SIZE - MARGIN - (p[ay] - y0) * scale;
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            writeln!(
                svg,
                r#"<polyline fill="none" stroke="{}" stroke-width="1" stroke-opacity="0.8" points="{}"/>"#,
                colour(r),
                pts.join(" ")
            )?;
        }
        svg.push_str("</svg>\n");
        let path = dir.join(format!("{prefix}_cluster{label}.svg"));
        fs::write(&path, svg).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(groups.len())
}
