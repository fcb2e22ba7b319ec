//! Minimal SVG line plot: residual (log scale) against iteration.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::convergence::ConvergenceRecord;
use crate::error::Result;

const W: f64 = 720.0;
const H: f64 = 440.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 20.0, 20.0, 50.0); // left, right, top, bottom
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn series(r: &ConvergenceRecord) -> Vec<(f64, f64)> {
    r.rows
        .iter()
        .filter_map(|row| {
            let v = row.est_residual.or(row.true_residual)?;
            (v > 0.0 && v.is_finite()).then(|| (row.k as f64, v.log10()))
        })
        .collect()
}

/// Renders one polyline per record.
pub fn render_svg(records: &[ConvergenceRecord], title: &str) -> String {
    let all: Vec<Vec<(f64, f64)>> = records.iter().map(series).collect();
    let pts = all.iter().flatten();
    let kmax = pts.clone().map(|p| p.0).fold(1.0, f64::max);
    let (mut lo, mut hi) = pts
        .clone()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    if !lo.is_finite() {
        (lo, hi) = (-1.0, 0.0);
    }
    lo = lo.floor();
    hi = hi.ceil().max(lo + 1.0);

    let (ml, mr, mt, mb) = MARGIN;
    let pw = W - ml - mr;
    let ph = H - mt - mb;
    let sx = |k: f64| ml + pw * k / kmax;
    let sy = |v: f64| mt + ph * (hi - v) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="14" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let mut e = lo as i64;
    while e <= hi as i64 {
        let y = sy(e as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{ml}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">1e{e}</text>"##,
            ml + pw,
            ml - 6.0,
            y + 4.0
        );
        e += 1;
    }
    for i in 0..=4 {
        let k = kmax * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(k),
            mt + ph + 18.0,
            k.round()
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">iteration</text>"#,
        ml + pw / 2.0,
        H - 10.0
    );
    for (i, (r, pts)) in records.iter().zip(&all).enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(k, v)| format!("{:.2},{:.2}", sx(k), sy(v))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let ly = mt + 16.0 + 16.0 * i as f64;
        let lx = ml + pw - 150.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&r.method)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_svg(records: &[ConvergenceRecord], title: &str, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, render_svg(records, title))?;
    Ok(())
}
