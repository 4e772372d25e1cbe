//! Standalone SVG figures.
//!
//! Output is a pure function of the input rows: numbers are printed with
//! fixed precision and series are drawn in sorted key order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::run::{read_iterations, read_summary, IterationRecord, ITERATIONS_FILE, STATUS_OK};
use super::tworoom::TwoRoomRecord;
use crate::error::{Error, Result};

/// Interference values above this are drawn at the edge of the scatter.
pub const SCATTER_CLIP: f64 = 1.0;
/// Moving-average window for per-run traces.
pub const SMOOTHING_WINDOW: usize = 10;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Scatter,
    Curves,
    PerRun,
    Tworoom,
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scatter" => Ok(PlotKind::Scatter),
            "curves" => Ok(PlotKind::Curves),
            "per_run" | "per-run" => Ok(PlotKind::PerRun),
            "tworoom" => Ok(PlotKind::Tworoom),
            _ => Err(Error::InvalidArgument(format!(
                "unknown plot kind {s:?}; expected scatter, curves, per_run or tworoom"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    color: &'static str,
    markers: bool,
    faint: bool,
}

#[derive(Debug, Clone, Default)]
struct Panel {
    title: String,
    x_label: String,
    y_label: String,
    series: Vec<Series>,
    vlines: Vec<(f64, String)>,
    x_max: Option<f64>,
    note: Option<String>,
}

const W: f64 = 720.0;
const H: f64 = 380.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        format!("{v:.1e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else if a >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if lo == hi {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    }
}

fn render_panel(out: &mut String, panel: &Panel, y0: f64) {
    let pts = || panel.series.iter().flat_map(|s| s.points.iter());
    let (x_lo, mut x_hi) = range(pts().map(|p| p.0).chain(panel.vlines.iter().map(|v| v.0)));
    if let Some(m) = panel.x_max {
        x_hi = x_hi.min(m * 1.02);
    }
    let (y_lo, y_hi) = range(pts().map(|p| p.1));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * pw;
    let sy = |y: f64| y0 + TOP + ph - (y - y_lo) / (y_hi - y_lo) * ph;

    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="15" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        y0 + 22.0,
        escape(&panel.title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{LEFT:.1}" y="{:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="#444"/>"##,
        y0 + TOP
    );
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let xv = x_lo + f * (x_hi - x_lo);
        let yv = y_lo + f * (y_hi - y_lo);
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"##,
            sx(xv),
            y0 + TOP + ph + 16.0,
            fmt_num(xv)
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"##,
            LEFT - 6.0,
            sy(yv) + 4.0,
            fmt_num(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        y0 + H - 10.0,
        escape(&panel.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" font-size="13" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        y0 + TOP + ph / 2.0,
        y0 + TOP + ph / 2.0,
        escape(&panel.y_label)
    );
    for (x, label) in &panel.vlines {
        let _ = writeln!(
            out,
            r##"<line x1="{0:.1}" y1="{1:.1}" x2="{0:.1}" y2="{2:.1}" stroke="#888" stroke-dasharray="5,4"/>"##,
            sx(*x),
            y0 + TOP,
            y0 + TOP + ph
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" font-size="11" fill="#555">{}</text>"##,
            sx(*x) + 4.0,
            y0 + TOP + 12.0,
            escape(label)
        );
    }
    for s in &panel.series {
        let opacity = if s.faint { 0.35 } else { 1.0 };
        if s.markers {
            for &(x, y) in &s.points {
                let _ = writeln!(
                    out,
                    r#"<circle class="marker" cx="{:.2}" cy="{:.2}" r="4" fill="{}" fill-opacity="0.8"/>"#,
                    sx(x.min(x_hi)),
                    sy(y),
                    s.color
                );
            }
        } else if !s.points.is_empty() {
            let path: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.5" stroke-opacity="{opacity}" points="{}"/>"#,
                s.color,
                path.join(" ")
            );
        }
    }
    let mut ly = y0 + TOP + 10.0;
    let mut seen = Vec::new();
    for s in &panel.series {
        if s.label.is_empty() || seen.contains(&s.label) {
            continue;
        }
        seen.push(s.label.clone());
        let lx = W - RIGHT + 14.0;
        let _ = writeln!(
            out,
            r#"<rect x="{lx:.1}" y="{:.1}" width="12" height="12" fill="{}"/>"#,
            ly - 10.0,
            s.color
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{ly:.1}" font-size="12">{}</text>"#,
            lx + 18.0,
            escape(&s.label)
        );
        ly += 18.0;
    }
    if let Some(note) = &panel.note {
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" font-size="11" fill="#555">{}</text>"##,
            W - RIGHT + 14.0,
            y0 + TOP + ph,
            escape(note)
        );
    }
}

fn render(panels: &[Panel]) -> Result<String> {
    if panels.is_empty() || panels.iter().any(|p| p.series.iter().all(|s| s.points.is_empty())) {
        return Err(Error::EmptyInput("nothing to plot"));
    }
    let height = H * panels.len() as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W:.0}" height="{height:.0}" viewBox="0 0 {W:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, p) in panels.iter().enumerate() {
        render_panel(&mut out, p, i as f64 * H);
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn moving_average(values: &[(f64, f64)], window: usize) -> Vec<(f64, f64)> {
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let slice = &values[lo..=i];
            (values[i].0, slice.iter().map(|p| p.1).sum::<f64>() / slice.len() as f64)
        })
        .collect()
}

/// Iteration rows from a CSV file, or from every `*/iterations.csv` under a
/// sweep directory.
fn load_iterations(input: &Path) -> Result<Vec<IterationRecord>> {
    if input.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(input)?
            .filter_map(|e| e.ok().map(|e| e.path().join(ITERATIONS_FILE)))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        let mut rows = Vec::new();
        for f in files {
            rows.extend(read_iterations(&f)?);
        }
        Ok(rows)
    } else {
        read_iterations(input)
    }
}

fn scatter(input: &Path) -> Result<Vec<Panel>> {
    let rows = read_summary(input)?;
    let mut by_hidden: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.status == STATUS_OK) {
        if r.interference_across_iters.is_finite() && r.degradation.is_finite() {
            by_hidden
                .entry(r.hidden)
                .or_default()
                .push((r.interference_across_iters.min(SCATTER_CLIP), r.degradation));
        }
    }
    let series = by_hidden
        .into_iter()
        .enumerate()
        .map(|(i, (h, points))| Series {
            label: format!("hidden {h}"),
            points,
            color: PALETTE[i % PALETTE.len()],
            markers: true,
            faint: false,
        })
        .collect();
    Ok(vec![Panel {
        title: "Interference vs. degradation".into(),
        x_label: "Interference Across Iterations".into(),
        y_label: "Degradation".into(),
        series,
        x_max: Some(SCATTER_CLIP),
        note: Some(format!("interference clipped at {SCATTER_CLIP}")),
        ..Panel::default()
    }])
}

fn curves(input: &Path) -> Result<Vec<Panel>> {
    let rows = load_iterations(input)?;
    let mut sums: BTreeMap<String, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.status == STATUS_OK) {
        let e = sums.entry(r.variant.clone()).or_default().entry(r.iter).or_insert((0.0, 0));
        e.0 += r.return_undisc;
        e.1 += 1;
    }
    let series = sums
        .into_iter()
        .enumerate()
        .map(|(i, (variant, iters))| Series {
            label: variant,
            points: iters.into_iter().map(|(k, (s, n))| (k as f64, s / n as f64)).collect(),
            color: PALETTE[i % PALETTE.len()],
            markers: false,
            faint: false,
        })
        .collect();
    Ok(vec![Panel {
        title: "Learning curves (mean over runs)".into(),
        x_label: "iteration".into(),
        y_label: "undiscounted return".into(),
        series,
        ..Panel::default()
    }])
}

fn per_run(input: &Path) -> Result<Vec<Panel>> {
    let rows = load_iterations(input)?;
    let mut runs: BTreeMap<(String, String), Vec<&IterationRecord>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.status == STATUS_OK) {
        runs.entry((r.variant.clone(), r.run_id.clone())).or_default().push(r);
    }
    let mut ret = Panel {
        title: "Per-run return".into(),
        x_label: "iteration".into(),
        y_label: "undiscounted return".into(),
        note: Some(format!("bold: moving average, window {SMOOTHING_WINDOW}")),
        ..Panel::default()
    };
    let mut inter = Panel {
        title: "Per-run Iteration Interference".into(),
        x_label: "iteration".into(),
        y_label: "Iteration Interference".into(),
        note: Some(format!("bold: moving average, window {SMOOTHING_WINDOW}")),
        ..Panel::default()
    };
    let variants: Vec<String> = {
        let mut v: Vec<String> = runs.keys().map(|k| k.0.clone()).collect();
        v.dedup();
        v
    };
    for ((variant, _), recs) in &runs {
        let color = PALETTE[variants.iter().position(|v| v == variant).unwrap_or(0) % PALETTE.len()];
        for (panel, pick) in [
            (&mut ret, (|r: &IterationRecord| r.return_undisc) as fn(&IterationRecord) -> f64),
            (&mut inter, |r: &IterationRecord| r.iter_interference),
        ] {
            let raw: Vec<(f64, f64)> = recs.iter().map(|r| (r.iter as f64, pick(r))).collect();
            panel.series.push(Series {
                label: String::new(),
                points: raw.clone(),
                color,
                markers: false,
                faint: true,
            });
            panel.series.push(Series {
                label: variant.clone(),
                points: moving_average(&raw, SMOOTHING_WINDOW),
                color,
                markers: false,
                faint: false,
            });
        }
    }
    Ok(vec![ret, inter])
}

fn tworoom(input: &Path) -> Result<Vec<Panel>> {
    let mut reader = csv::Reader::from_path(input)?;
    let rows: Vec<TwoRoomRecord> = reader
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Schema(format!("{}: {e}", input.display())))?;
    let mut runs: BTreeMap<(String, u64), Vec<&TwoRoomRecord>> = BTreeMap::new();
    for r in &rows {
        runs.entry((r.agent.clone(), r.seed)).or_default().push(r);
    }
    let agents: Vec<String> = {
        let mut v: Vec<String> = runs.keys().map(|k| k.0.clone()).collect();
        v.dedup();
        v
    };
    let switch = rows.iter().find(|r| r.room == 2).map(|r| r.switch_step as f64);
    let mut ret = Panel {
        title: "Two-Room: offline return in room 1".into(),
        x_label: "environment step".into(),
        y_label: "undiscounted return (room 1)".into(),
        ..Panel::default()
    };
    let mut inter = Panel {
        title: "Two-Room: interference on room-1 transitions".into(),
        x_label: "environment step".into(),
        y_label: "mean Update Interference".into(),
        ..Panel::default()
    };
    if let Some(s) = switch {
        ret.vlines.push((s, "teleport to room 2".into()));
        inter.vlines.push((s, "teleport to room 2".into()));
    }
    for ((agent, _), recs) in &runs {
        let color = PALETTE[agents.iter().position(|a| a == agent).unwrap_or(0) % PALETTE.len()];
        ret.series.push(Series {
            label: agent.clone(),
            points: recs.iter().map(|r| (r.step as f64, r.return_room1_undisc)).collect(),
            color,
            markers: false,
            faint: false,
        });
        inter.series.push(Series {
            label: agent.clone(),
            points: recs
                .iter()
                .filter(|r| r.interference_room1.is_finite())
                .map(|r| (r.step as f64, r.interference_room1))
                .collect(),
            color,
            markers: false,
            faint: false,
        });
    }
    if inter.series.iter().all(|s| s.points.is_empty()) {
        return Ok(vec![ret]);
    }
    Ok(vec![ret, inter])
}

/// Renders `kind` from `input` and writes the SVG to `out`. Nothing is
/// written when the input yields no data.
pub fn emit_plot(kind: PlotKind, input: &Path, out: &Path) -> Result<usize> {
    let panels = match kind {
        PlotKind::Scatter => scatter(input)?,
        PlotKind::Curves => curves(input)?,
        PlotKind::PerRun => per_run(input)?,
        PlotKind::Tworoom => tworoom(input)?,
    };
    let svg = render(&panels)?;
    std::fs::write(out, &svg)?;
    Ok(panels.iter().flat_map(|p| &p.series).filter(|s| s.markers).map(|s| s.points.len()).sum())
}
