//! Plain SVG renderings of metrics logs and report tables.
//!
//! Output depends only on the input data, so the same CSV always gives the
//! same bytes.

use std::fmt::Write as _;

use super::CsvTable;
use crate::error::{Error, Result};
use crate::experiment::{read_metrics, MetricsRow, METRICS_HEADER};

/// Longest series drawn point by point; longer ones are averaged into this many bins.
pub const MAX_POINTS: usize = 600;

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 260.0;
const MARGIN: f64 = 50.0;

struct Svg {
    out: String,
}

impl Svg {
    fn new(w: f64, h: f64) -> Self {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        Self { out }
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(self.out, r#"<text x="{x:.1}" y="{y:.1}" text-anchor="{anchor}">{}</text>"#, escape(s));
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(self.out, r#"<line x1="{x1:.1}" y1="{y1:.1}" x2="{x2:.1}" y2="{y2:.1}" stroke="{stroke}"/>"#);
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(self.out, r#"<rect x="{x:.1}" y="{y:.1}" width="{w:.1}" height="{h:.1}" fill="{fill}"/>"#);
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Axes, title and tick labels for the panel at `(ox, oy)`.
#[allow(clippy::too_many_arguments)]
fn axes(svg: &mut Svg, ox: f64, oy: f64, title: &str, xlabel: &str, ylabel: &str, x: (f64, f64), y: (f64, f64)) {
    let (x0, y0, x1, y1) = (ox + MARGIN, oy + PANEL_H - MARGIN + 10.0, ox + PANEL_W - 10.0, oy + 25.0);
    svg.text(ox + PANEL_W / 2.0, oy + 15.0, "middle", title);
    svg.line(x0, y0, x1, y0, "black");
    svg.line(x0, y0, x0, y1, "black");
    svg.text((x0 + x1) / 2.0, y0 + 30.0, "middle", xlabel);
    svg.text(ox + 12.0, (y0 + y1) / 2.0, "middle", ylabel);
    for (v, px) in [(x.0, x0), (x.1, x1)] {
        svg.text(px, y0 + 14.0, "middle", &fmt_tick(v));
    }
    for (v, py) in [(y.0, y0), (y.1, y1)] {
        svg.text(x0 - 4.0, py + 4.0, "end", &fmt_tick(v));
    }
}

fn bounds(vals: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in vals {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return None;
    }
    if lo == hi {
        Some((lo - 0.5, hi + 0.5))
    } else {
        Some((lo, hi))
    }
}

/// Means over at most [`MAX_POINTS`] consecutive bins.
fn downsample(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    if points.len() <= MAX_POINTS {
        return points.to_vec();
    }
    let per = points.len().div_ceil(MAX_POINTS);
    points
        .chunks(per)
        .map(|c| {
            let n = c.len() as f64;
            (c.iter().map(|p| p.0).sum::<f64>() / n, c.iter().map(|p| p.1).sum::<f64>() / n)
        })
        .collect()
}

fn line_panel(svg: &mut Svg, ox: f64, oy: f64, title: &str, ylabel: &str, points: &[(f64, f64)]) {
    let pts = downsample(points);
    let x = bounds(pts.iter().map(|p| p.0)).unwrap_or((0.0, 1.0));
    let y = bounds(pts.iter().map(|p| p.1)).unwrap_or((0.0, 1.0));
    axes(svg, ox, oy, title, "step", ylabel, x, y);
    if pts.is_empty() {
        return;
    }
    let (x0, y0, x1, y1) = (ox + MARGIN, oy + PANEL_H - MARGIN + 10.0, ox + PANEL_W - 10.0, oy + 25.0);
    let px = |v: f64| x0 + (v - x.0) / (x.1 - x.0) * (x1 - x0);
    let py = |v: f64| y0 + (v - y.0) / (y.1 - y.0) * (y1 - y0);
    let path: Vec<String> = pts.iter().map(|p| format!("{:.1},{:.1}", px(p.0), py(p.1))).collect();
    let _ = writeln!(svg.out, r#"<polyline fill="none" stroke="steelblue" points="{}"/>"#, path.join(" "));
}

/// Four panels: test accuracy, episode reward, gate count and depth per step.
pub fn metrics_svg(rows: &[MetricsRow]) -> String {
    let mut svg = Svg::new(2.0 * PANEL_W, 2.0 * PANEL_H);
    let acc: Vec<(f64, f64)> =
        rows.iter().filter_map(|r| r.test_accuracy.map(|a| (r.step as f64, a))).collect();
    let reward: Vec<(f64, f64)> = rows.iter().filter(|r| r.done).map(|r| (r.step as f64, r.episode_return)).collect();
    let gates: Vec<(f64, f64)> = rows.iter().map(|r| (r.step as f64, r.gates as f64)).collect();
    let depth: Vec<(f64, f64)> = rows.iter().map(|r| (r.step as f64, r.depth as f64)).collect();
    line_panel(&mut svg, 0.0, 0.0, "Test accuracy", "accuracy", &acc);
    line_panel(&mut svg, PANEL_W, 0.0, "Episode reward", "return", &reward);
    line_panel(&mut svg, 0.0, PANEL_H, "Number of gates", "gates", &gates);
    line_panel(&mut svg, PANEL_W, PANEL_H, "Circuit depth", "depth", &depth);
    svg.finish()
}

/// Color for `t` in [0, 1], white to dark blue.
fn shade(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let c = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", c(255.0, 8.0), c(255.0, 48.0), c(255.0, 107.0))
}

/// Heatmap of a matrix whose first column holds row labels.
pub fn heatmap_svg(title: &str, col_labels: &[String], row_labels: &[String], values: &[Vec<f64>]) -> String {
    let cell = 36.0;
    let (left, top) = (110.0, 60.0);
    let w = left + cell * col_labels.len().max(1) as f64 + 20.0;
    let h = top + cell * row_labels.len().max(1) as f64 + 20.0;
    let mut svg = Svg::new(w.max(240.0), h);
    svg.text(w.max(240.0) / 2.0, 18.0, "middle", title);
    let (lo, hi) = bounds(values.iter().flatten().copied().filter(|v| v.is_finite())).unwrap_or((0.0, 1.0));
    for (j, c) in col_labels.iter().enumerate() {
        svg.text(left + cell * (j as f64 + 0.5), top - 8.0, "middle", c);
    }
    for (i, r) in row_labels.iter().enumerate() {
        let y = top + cell * i as f64;
        svg.text(left - 6.0, y + cell / 2.0 + 4.0, "end", r);
        for (j, v) in values[i].iter().enumerate() {
            let x = left + cell * j as f64;
            svg.rect(x, y, cell, cell, &shade((v - lo) / (hi - lo)));
            let label = if v.fract() == 0.0 { format!("{v:.0}") } else { format!("{v:.2}") };
            svg.text(x + cell / 2.0, y + cell / 2.0 + 4.0, "middle", &label);
        }
    }
    svg.finish()
}

/// Horizontal bars, one per row.
pub fn bars_svg(title: &str, labels: &[String], values: &[f64]) -> String {
    let bar = 18.0;
    let (left, top, width) = (220.0, 40.0, 360.0);
    let h = top + bar * 1.3 * labels.len().max(1) as f64 + 20.0;
    let mut svg = Svg::new(left + width + 60.0, h);
    svg.text((left + width) / 2.0, 18.0, "middle", title);
    let max = values.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    for (i, (l, v)) in labels.iter().zip(values).enumerate() {
        let y = top + bar * 1.3 * i as f64;
        svg.text(left - 6.0, y + bar - 5.0, "end", l);
        let w = if max > 0.0 { width * v / max } else { 0.0 };
        svg.rect(left, y, w.max(0.0), bar, "steelblue");
        svg.text(left + w.max(0.0) + 4.0, y + bar - 5.0, "start", &fmt_tick(*v));
    }
    svg.finish()
}

fn numeric(table: &CsvTable, cols: std::ops::Range<usize>) -> Result<Vec<Vec<f64>>> {
    (0..table.rows.len()).map(|r| cols.clone().map(|c| table.f64_at(r, c)).collect()).collect()
}

/// Pivots `(row key, col key, value)` triples into a matrix.
fn pivot(table: &CsvTable, r: usize, c: usize, v: usize) -> Result<(Vec<String>, Vec<String>, Vec<Vec<f64>>)> {
    let mut rows: Vec<String> = Vec::new();
    let mut cols: Vec<String> = Vec::new();
    for row in &table.rows {
        if !rows.contains(&row[r]) {
            rows.push(row[r].clone());
        }
        if !cols.contains(&row[c]) {
            cols.push(row[c].clone());
        }
    }
    let mut m = vec![vec![0.0; cols.len()]; rows.len()];
    for (k, row) in table.rows.iter().enumerate() {
        let i = rows.iter().position(|x| *x == row[r]).unwrap();
        let j = cols.iter().position(|x| *x == row[c]).unwrap();
        m[i][j] = table.f64_at(k, v)?;
    }
    Ok((rows, cols, m))
}

/// Renders a metrics log or any report table this crate writes.
pub fn render_csv(title: &str, text: &str) -> Result<String> {
    if text.starts_with(METRICS_HEADER) {
        return Ok(metrics_svg(&read_metrics(text.as_bytes())?));
    }
    let t = CsvTable::parse(text)?;
    let h: Vec<&str> = t.header.iter().map(String::as_str).collect();
    let first_col = |t: &CsvTable| t.rows.iter().map(|r| r[0].clone()).collect::<Vec<_>>();
    match h.as_slice() {
        ["accuracy_bin", "depth", "count"] => {
            let (rows, cols, m) = pivot(&t, 0, 1, 2)?;
            let cols: Vec<String> = cols.into_iter().map(|c| format!("D{c}")).collect();
            Ok(heatmap_svg(title, &cols, &rows, &m))
        }
        ["pattern", "count"] => {
            let vals: Vec<f64> = (0..t.rows.len()).map(|r| t.f64_at(r, 1)).collect::<Result<_>>()?;
            Ok(bars_svg(title, &first_col(&t), &vals))
        }
        ["key", "value"] => {
            // text-valued entries have no bar
            let (keys, vals): (Vec<String>, Vec<f64>) =
                t.rows.iter().filter_map(|r| r[1].parse::<f64>().ok().map(|v| (r[0].clone(), v))).unzip();
            if keys.is_empty() {
                return Err(Error::Parse("key/value table has no numeric values".into()));
            }
            Ok(bars_svg(title, &keys, &vals))
        }
        [a, b, "loss"] if a.starts_with("theta") && b.starts_with("theta") => {
            let (rows, cols, m) = pivot(&t, 0, 1, 2)?;
            let short = |v: Vec<String>| v.into_iter().map(|s| s.parse::<f64>().map(|x| format!("{x:.2}")).unwrap_or(s)).collect::<Vec<_>>();
            Ok(heatmap_svg(title, &short(cols), &short(rows), &m))
        }
        ["model", .., "TeA"] => {
            let col = t.column("TeA").unwrap();
            let vals: Vec<f64> = (0..t.rows.len()).map(|r| t.f64_at(r, col)).collect::<Result<_>>()?;
            Ok(bars_svg(title, &first_col(&t), &vals))
        }
        [_, rest @ ..] if !rest.is_empty() => {
            let m = numeric(&t, 1..h.len())?;
            Ok(heatmap_svg(title, &t.header[1..], &first_col(&t), &m))
        }
        _ => Err(Error::Parse(format!("no plot for a table with columns {h:?}"))),
    }
}
