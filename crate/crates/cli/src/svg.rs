//! Standalone SVG 1.1 figures. Output depends only on the input values, so
//! identical inputs give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use resalign::linalg::DenseMatrix;

use crate::error::{CliError, Result};

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

fn header(out: &mut String, width: usize, height: usize, title: &str) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(out, "<title>{}</title>", escape(title));
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Short fixed-format label for axis ticks and legends.
fn number(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() < 1e-2 || v.abs() >= 1e4 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// White-centered blue/red scale for `t ∈ [-1, 1]`.
fn diverging(t: f64) -> String {
    let fade = (255.0 * (1.0 - t.abs())).round() as u8;
    if t >= 0.0 {
        format!("#ff{fade:02x}{fade:02x}")
    } else {
        format!("#{fade:02x}{fade:02x}ff")
    }
}

/// One `<rect>` per matrix entry, colored on a symmetric diverging scale
/// normalized by the largest `|value|` in the matrix.
pub fn heatmap_svg(matrix: &DenseMatrix, title: &str) -> Result<String> {
    let (rows, cols) = matrix.shape();
    if rows == 0 || cols == 0 {
        return Err(CliError::invalid("heatmap of an empty matrix"));
    }
    if !matrix.is_finite() {
        return Err(CliError::invalid("heatmap input contains a non-finite value"));
    }
    let cell = (480 / rows.max(cols)).max(2);
    let (top, left) = (30, 10);
    let width = left * 2 + cell * cols;
    let height = top + cell * rows + 10;
    let scale = matrix.max_abs();
    let mut out = String::new();
    header(&mut out, width.max(240), height, title);
    let _ = writeln!(
        out,
        r#"<text x="{left}" y="18" font-family="sans-serif" font-size="12">{} (max |v| = {})</text>"#,
        escape(title),
        number(scale)
    );
    for r in 0..rows {
        for c in 0..cols {
            let t = if scale > 0.0 { matrix[(r, c)] / scale } else { 0.0 };
            let _ = writeln!(
                out,
                r#"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="{}"/>"#,
                left + c * cell,
                top + r * cell,
                diverging(t)
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// A named polyline.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Draw a dot at every point.
    pub markers: bool,
}

pub fn lines_svg(series: &[Series], chart: &LineChart) -> Result<String> {
    if series.is_empty() || series.iter().any(|s| s.points.is_empty()) {
        return Err(CliError::invalid("line chart needs at least one point per series"));
    }
    if series.iter().flat_map(|s| &s.points).any(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(CliError::invalid("line chart input contains a non-finite value"));
    }
    let bounds = |axis: usize| {
        let vals = series.iter().flat_map(|s| s.points.iter().map(move |p| p[axis]));
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if hi > lo {
            (lo, hi)
        } else {
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
            (lo - pad, hi + pad)
        }
    };
    let (x0, x1) = bounds(0);
    let (y0, y1) = bounds(1);
    let (width, height) = (640.0, 420.0);
    let (pl, pr, pt, pb) = (70.0, 150.0, 30.0, 50.0);
    let px = |x: f64| pl + (x - x0) / (x1 - x0) * (width - pl - pr);
    let py = |y: f64| height - pb - (y - y0) / (y1 - y0) * (height - pt - pb);

    let mut out = String::new();
    header(&mut out, width as usize, height as usize, &chart.title);
    let _ = writeln!(
        out,
        r#"<text x="{pl}" y="18" font-family="sans-serif" font-size="13">{}</text>"#,
        escape(&chart.title)
    );
    let _ = writeln!(
        out,
        r##"<polyline points="{pl},{pt} {pl},{:.2} {:.2},{:.2}" fill="none" stroke="#000"/>"##,
        height - pb,
        width - pr,
        height - pb
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="middle">{}</text>"#,
            px(xv),
            height - pb + 15.0,
            number(xv)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
            pl - 5.0,
            py(yv) + 3.0,
            number(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
        (pl + width - pr) / 2.0,
        height - 12.0,
        escape(&chart.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
        (pt + height - pb) / 2.0,
        (pt + height - pb) / 2.0,
        escape(&chart.y_label)
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s.points.iter().map(|p| format!("{:.2},{:.2}", px(p[0]), py(p[1]))).collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        if chart.markers {
            for p in &s.points {
                let _ = writeln!(
                    out,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                    px(p[0]),
                    py(p[1])
                );
            }
        }
        if i < 20 {
            let ly = pt + 14.0 * i as f64;
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" fill="{color}">{}</text>"#,
                width - pr + 10.0,
                ly + 4.0,
                escape(&s.name)
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn write(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::file(path, e))
}

pub fn emit_svg_heatmap(matrix: &DenseMatrix, title: &str, path: &Path) -> Result<()> {
    write(path, heatmap_svg(matrix, title)?)
}

pub fn emit_svg_lines(series: &[Series], chart: &LineChart, path: &Path) -> Result<()> {
    write(path, lines_svg(series, chart)?)
}
