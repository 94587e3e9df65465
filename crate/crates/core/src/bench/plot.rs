//! Deterministic SVG figures from a results file.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use super::record::{load_records, ExperimentRecord};
use crate::simgen::MechanismKind;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FigureKind {
    /// Median score against capacity, one curve per method.
    Capacity,
    /// NeuMiss depth curves laid out by dimension (rows) and sample size (columns).
    DepthPanels,
    /// Score distribution per method for each grid point.
    Boxplot,
}

impl FigureKind {
    pub const ALL: [FigureKind; 3] = [FigureKind::Capacity, FigureKind::DepthPanels, FigureKind::Boxplot];

    pub fn name(self) -> &'static str {
        match self {
            FigureKind::Capacity => "capacity",
            FigureKind::DepthPanels => "depth_panels",
            FigureKind::Boxplot => "boxplot",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 240.0;
const MARGIN_L: f64 = 56.0;
const MARGIN_R: f64 = 12.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 40.0;
const LEGEND_H: f64 = 24.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

struct Series {
    name: String,
    points: Vec<(f64, f64)>,
}

enum PanelBody {
    Lines(Vec<Series>),
    Boxes(Vec<(String, Vec<f64>)>),
}

struct Panel {
    title: String,
    x_label: String,
    y_label: String,
    body: PanelBody,
}

pub fn median(v: &[f64]) -> f64 {
    quantile(v, 0.5)
}

/// Linear-interpolation quantile of unsorted data.
pub fn quantile(v: &[f64], q: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    if s.is_empty() {
        return f64::NAN;
    }
    let pos = q * (s.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

fn nice_step(raw: f64) -> f64 {
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

/// Padded range and tick positions.
fn axis(lo: f64, hi: f64) -> (f64, f64, Vec<f64>) {
    let (mut lo, mut hi) = (lo, hi);
    if !(hi > lo) {
        let pad = if lo == 0.0 { 0.5 } else { lo.abs() * 0.1 };
        lo -= pad;
        hi += pad;
    }
    let step = nice_step((hi - lo) / 5.0);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    let ticks = (first..=last).map(|k| k as f64 * step).collect();
    (lo, hi, ticks)
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn color(names: &[String], name: &str) -> &'static str {
    let i = names.iter().position(|n| n == name).unwrap_or(0);
    PALETTE[i % PALETTE.len()]
}

fn draw_panel(out: &mut String, p: &Panel, ox: f64, oy: f64, names: &[String]) {
    let (x0, y0) = (ox + MARGIN_L, oy + MARGIN_T);
    let (w, h) = (PANEL_W - MARGIN_L - MARGIN_R, PANEL_H - MARGIN_T - MARGIN_B);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
        x0 + w / 2.0,
        oy + 16.0,
        esc(&p.title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{x0:.2}" y="{y0:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="#444"/>"##
    );
    let ys: Vec<f64> = match &p.body {
        PanelBody::Lines(s) => s.iter().flat_map(|s| s.points.iter().map(|p| p.1)).collect(),
        PanelBody::Boxes(b) => b.iter().flat_map(|b| b.1.iter().copied()).collect(),
    };
    if ys.is_empty() {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">no data</text>"#,
            x0 + w / 2.0,
            y0 + h / 2.0
        );
        return;
    }
    let (ylo, yhi, yticks) = axis(
        ys.iter().copied().fold(f64::INFINITY, f64::min),
        ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let sy = |v: f64| y0 + h - (v - ylo) / (yhi - ylo) * h;
    for t in &yticks {
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" font-size="10" text-anchor="end">{}</text>"##,
            x0,
            sy(*t),
            x0 + w,
            sy(*t),
            x0 - 4.0,
            sy(*t) + 3.0,
            fmt_tick(*t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
        x0 + w / 2.0,
        y0 + h + 32.0,
        esc(&p.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">{}</text>"#,
        ox + 14.0,
        y0 + h / 2.0,
        ox + 14.0,
        y0 + h / 2.0,
        esc(&p.y_label)
    );
    match &p.body {
        PanelBody::Lines(series) => {
            let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
            let (xlo, xhi, xticks) = axis(
                xs.iter().copied().fold(f64::INFINITY, f64::min),
                xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            );
            let sx = |v: f64| x0 + (v - xlo) / (xhi - xlo) * w;
            for t in &xticks {
                let _ = writeln!(
                    out,
                    r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}</text>"#,
                    sx(*t),
                    y0 + h + 14.0,
                    fmt_tick(*t)
                );
            }
            for s in series {
                let c = color(names, &s.name);
                if s.points.len() > 1 {
                    let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                    let _ = writeln!(
                        out,
                        r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#,
                        pts.join(" ")
                    );
                }
                for &(x, y) in &s.points {
                    let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{c}"/>"#, sx(x), sy(y));
                }
            }
        }
        PanelBody::Boxes(boxes) => {
            let slot = w / boxes.len() as f64;
            for (i, (name, vals)) in boxes.iter().enumerate() {
                let c = color(names, name);
                let cx = x0 + slot * (i as f64 + 0.5);
                let half = (slot * 0.3).min(20.0);
                let (q1, q2, q3) = (quantile(vals, 0.25), median(vals), quantile(vals, 0.75));
                let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let _ = writeln!(
                    out,
                    r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="{c}"/>"#,
                    sy(lo),
                    sy(hi)
                );
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{c}" fill-opacity="0.3" stroke="{c}"/>"#,
                    cx - half,
                    sy(q3),
                    2.0 * half,
                    (sy(q1) - sy(q3)).max(0.5)
                );
                let _ = writeln!(
                    out,
                    r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{c}" stroke-width="2"/>"#,
                    cx - half,
                    sy(q2),
                    cx + half,
                    sy(q2)
                );
                let _ = writeln!(
                    out,
                    r#"<text x="{cx:.2}" y="{:.2}" font-size="9" text-anchor="middle">{}</text>"#,
                    y0 + h + 14.0,
                    esc(name)
                );
            }
        }
    }
}

fn render_panels(title: &str, panels: &[Panel], cols: usize, names: &[String]) -> String {
    let cols = cols.max(1);
    let rows = panels.len().div_ceil(cols).max(1);
    let width = PANEL_W * cols as f64;
    let height = PANEL_H * rows as f64 + LEGEND_H + 24.0;
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="18" font-size="14" text-anchor="middle">{}</text>"#,
        width / 2.0,
        esc(title)
    );
    for (i, name) in names.iter().enumerate() {
        let x = 10.0 + 110.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="28" width="10" height="10" fill="{}"/><text x="{:.2}" y="37" font-size="10">{}</text>"#,
            color(names, name),
            x + 14.0,
            esc(name)
        );
    }
    for (i, p) in panels.iter().enumerate() {
        let ox = PANEL_W * (i % cols) as f64;
        let oy = 24.0 + LEGEND_H + PANEL_H * (i / cols) as f64;
        draw_panel(&mut out, p, ox, oy, names);
    }
    if panels.is_empty() {
        let _ = writeln!(out, r#"<text x="{:.2}" y="120" font-size="12" text-anchor="middle">no data</text>"#, width / 2.0);
    }
    out.push_str("</svg>\n");
    out
}

type GridPoint = (MechanismKind, usize, usize);

fn y_label(rows: &[&ExperimentRecord]) -> &'static str {
    if rows.iter().all(|r| r.delta.is_some()) {
        if rows.iter().all(|r| r.bayes_rate.is_some()) {
            "R2 minus Bayes rate"
        } else {
            "R2 minus best"
        }
    } else {
        "R2"
    }
}

fn value(r: &ExperimentRecord, use_delta: bool) -> Option<f64> {
    if use_delta {
        r.delta
    } else {
        r.r2_test
    }
}

fn curve_series(rows: &[&ExperimentRecord], series_of: impl Fn(&ExperimentRecord) -> String) -> (Vec<Series>, &'static str) {
    let label = y_label(rows);
    let use_delta = label != "R2";
    let mut acc: BTreeMap<String, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        if let (Some(c), Some(v)) = (r.capacity, value(r, use_delta)) {
            acc.entry(series_of(r)).or_default().entry(c).or_default().push(v);
        }
    }
    let series = acc
        .into_iter()
        .map(|(name, by_cap)| Series {
            name,
            points: by_cap.into_iter().map(|(c, v)| (c as f64, median(&v))).collect(),
        })
        .collect();
    (series, label)
}

fn grid_title(g: &GridPoint) -> String {
    format!("{} n={} d={}", g.0, g.1, g.2)
}

fn capacity_panels(records: &[ExperimentRecord]) -> (Vec<Panel>, Vec<String>) {
    let mut groups: BTreeMap<GridPoint, Vec<&ExperimentRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.is_error() && r.capacity.is_some()) {
        groups.entry((r.mechanism, r.n, r.d)).or_default().push(r);
    }
    let names: BTreeSet<String> = groups.values().flatten().map(|r| r.method.clone()).collect();
    let panels = groups
        .iter()
        .map(|(g, rows)| {
            let (series, label) = curve_series(rows, |r| r.method.clone());
            Panel {
                title: grid_title(g),
                x_label: "capacity".into(),
                y_label: label.into(),
                body: PanelBody::Lines(series),
            }
        })
        .collect();
    (panels, names.into_iter().collect())
}

fn depth_panels(records: &[ExperimentRecord]) -> (Vec<Panel>, Vec<String>, usize) {
    let rows: Vec<&ExperimentRecord> = records
        .iter()
        .filter(|r| !r.is_error() && r.capacity.is_some() && r.method == "neumiss")
        .collect();
    let ds: BTreeSet<usize> = rows.iter().map(|r| r.d).collect();
    let ns: BTreeSet<usize> = rows.iter().map(|r| r.n).collect();
    let names: BTreeSet<String> = rows.iter().map(|r| r.mechanism.name().to_string()).collect();
    let mut panels = Vec::new();
    for &d in &ds {
        for &n in &ns {
            let cell: Vec<&ExperimentRecord> = rows.iter().copied().filter(|r| r.d == d && r.n == n).collect();
            let (series, label) = curve_series(&cell, |r| r.mechanism.name().to_string());
            panels.push(Panel {
                title: format!("d={d} n={n}"),
                x_label: "depth".into(),
                y_label: label.into(),
                body: PanelBody::Lines(series),
            });
        }
    }
    (panels, names.into_iter().collect(), ns.len())
}

fn box_panels(records: &[ExperimentRecord]) -> (Vec<Panel>, Vec<String>) {
    let mut groups: BTreeMap<GridPoint, Vec<&ExperimentRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.is_error()) {
        groups.entry((r.mechanism, r.n, r.d)).or_default().push(r);
    }
    let names: BTreeSet<String> = groups.values().flatten().map(|r| r.method.clone()).collect();
    let panels = groups
        .iter()
        .map(|(g, rows)| {
            let label = y_label(rows);
            let use_delta = label != "R2";
            // One value per method and repetition: the validation-best row.
            let mut best: BTreeMap<(String, usize), &ExperimentRecord> = BTreeMap::new();
            for r in rows {
                let slot = best.entry((r.method.clone(), r.seed)).or_insert(r);
                if r.r2_val > slot.r2_val {
                    *slot = r;
                }
            }
            let mut by_method: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for ((m, _), r) in best {
                if let Some(v) = value(r, use_delta) {
                    by_method.entry(m).or_default().push(v);
                }
            }
            Panel {
                title: grid_title(g),
                x_label: "method".into(),
                y_label: label.into(),
                body: PanelBody::Boxes(by_method.into_iter().collect()),
            }
        })
        .collect();
    (panels, names.into_iter().collect())
}

/// SVG text for `records`. Output depends only on the records.
pub fn render_svg(records: &[ExperimentRecord], kind: FigureKind) -> String {
    match kind {
        FigureKind::Capacity => {
            let (panels, names) = capacity_panels(records);
            render_panels("Performance against capacity", &panels, 3, &names)
        }
        FigureKind::DepthPanels => {
            let (panels, names, cols) = depth_panels(records);
            render_panels("NeuMiss depth by dimension and sample size", &panels, cols, &names)
        }
        FigureKind::Boxplot => {
            let (panels, names) = box_panels(records);
            render_panels("Methods compared across repetitions", &panels, 3, &names)
        }
    }
}

pub fn plot_results(csv_path: &Path, kind: FigureKind, out: &Path) -> Result<()> {
    let records = load_records(csv_path)?;
    let svg = render_svg(&records, kind);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(out, svg).map_err(|e| Error::io(out, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(method: &str, cap: Option<usize>, seed: usize, r2: f64) -> ExperimentRecord {
        ExperimentRecord {
            mechanism: MechanismKind::Mcar,
            n: 100,
            d: 5,
            method: method.into(),
            capacity: cap,
            seed,
            r2_train: Some(r2),
            r2_val: Some(r2),
            r2_test: Some(r2),
            bayes_rate: Some(0.9),
            delta: Some(r2 - 0.9),
            wall_time_s: 0.1,
            error: None,
        }
    }

    #[test]
    fn quantiles_interpolate() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[1.0, 2.0, 3.0, 4.0]), 2.5);
        assert_eq!(quantile(&[0.0, 4.0], 0.25), 1.0);
    }

    #[test]
    fn ticks_cover_range() {
        let (lo, hi, t) = axis(0.02, 0.87);
        assert!(lo <= 0.02 && hi >= 0.87);
        assert_eq!(t.len(), 4);
        assert!(t.iter().zip([0.2, 0.4, 0.6, 0.8]).all(|(a, b)| (a - b).abs() < 1e-12));
        let (lo, hi, _) = axis(1.0, 1.0);
        assert!(lo < 1.0 && hi > 1.0);
    }

    #[test]
    fn single_record_gives_single_point() {
        let svg = render_svg(&[rec("neumiss", Some(3), 0, 0.8)], FigureKind::Capacity);
        assert!(svg.starts_with("<?xml"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 1);
        assert!(!svg.contains("<polyline"));
    }

    #[test]
    fn every_kind_renders_and_is_deterministic() {
        let mut rows = Vec::new();
        for seed in 0..3 {
            for cap in 0..4 {
                rows.push(rec("neumiss", Some(cap), seed, 0.5 + 0.05 * cap as f64 + 0.01 * seed as f64));
            }
            rows.push(rec("em", None, seed, 0.6));
        }
        for kind in FigureKind::ALL {
            let a = render_svg(&rows, kind);
            assert_eq!(a, render_svg(&rows, kind));
            assert_eq!(a.matches("<svg").count(), 1);
        }
        let boxes = render_svg(&rows, FigureKind::Boxplot);
        assert_eq!(boxes.matches("fill-opacity").count(), 2);
        assert_eq!(render_svg(&[], FigureKind::Boxplot).matches("no data").count(), 1);
    }
}
