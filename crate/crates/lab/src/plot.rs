//! Static SVG convergence plots: squared distance on a log scale against
//! communication steps.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::LabError;
use crate::experiment::ExperimentReport;

/// Values at or below zero are drawn at this floor.
pub const SQ_DIST_FLOOR: f64 = 1e-300;

const WIDTH: f64 = 840.0;
const HEIGHT: f64 = 520.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// One polyline: `(communication steps, squared distance)` points.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(u64, f64)>,
}

/// Reads `(comm_steps, sq_dist)` from a trace CSV.
pub fn read_trace_csv(path: &Path) -> Result<Vec<(u64, f64)>, LabError> {
    let text = fs::read_to_string(path)
        .map_err(|e| LabError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    if lines.next() != Some(svrp::fedsim::CSV_HEADER) {
        return Err(LabError::Data(format!("{}: unexpected header", path.display())));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let mut cols = line.split(',');
            let bad = || LabError::Data(format!("{}:{}: malformed row", path.display(), i + 2));
            let comm = cols.next().and_then(|c| c.parse().ok()).ok_or_else(bad)?;
            let sq = cols.nth(1).and_then(|c| c.parse().ok()).ok_or_else(bad)?;
            Ok((comm, sq))
        })
        .collect()
}

/// Median over runs on the union of their communication counts. Each run is
/// a step function holding its last recorded value; runs that have not
/// recorded anything yet at a given count are left out.
pub fn median_curve(runs: &[Vec<(u64, f64)>]) -> Vec<(u64, f64)> {
    let mut grid: Vec<u64> = runs.iter().flatten().map(|p| p.0).collect();
    grid.sort_unstable();
    grid.dedup();
    let mut cursors = vec![0usize; runs.len()];
    let mut out = Vec::with_capacity(grid.len());
    for &c in &grid {
        let mut values = Vec::with_capacity(runs.len());
        for (run, cur) in runs.iter().zip(cursors.iter_mut()) {
            while *cur < run.len() && run[*cur].0 <= c {
                *cur += 1;
            }
            if *cur > 0 {
                values.push(run[*cur - 1].1);
            }
        }
        values.sort_by(f64::total_cmp);
        out.push((c, crate::experiment::quantile(&values, 0.5)));
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag)
}

/// Renders the series; output bytes depend only on the input.
pub fn render_svg(title: &str, series: &[Series]) -> Result<String, LabError> {
    let all: Vec<(u64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if all.is_empty() {
        return Err(LabError::Data("nothing to plot: every trace is empty".into()));
    }
    let ylog = |v: f64| v.max(SQ_DIST_FLOOR).log10();
    let mut y_lo = all.iter().map(|p| ylog(p.1)).fold(f64::INFINITY, f64::min).floor();
    let mut y_hi = all.iter().map(|p| ylog(p.1)).fold(f64::NEG_INFINITY, f64::max).ceil();
    if y_hi <= y_lo {
        y_lo -= 1.0;
        y_hi += 1.0;
    }
    let x_hi = all.iter().map(|p| p.0).max().unwrap_or(0).max(1) as f64;
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let px = |x: f64| LEFT + x / x_hi * pw;
    let py = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="#333"/>"##
    );

    let decades = (y_hi - y_lo) as usize;
    let every = decades.div_ceil(10).max(1);
    for k in (0..=decades).step_by(every) {
        let y = y_lo + k as f64;
        let yy = py(y);
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            yy + 4.0,
            y as i64
        );
    }
    let step = nice_step(x_hi);
    let mut x = 0.0;
    while x <= x_hi * (1.0 + 1e-12) {
        let xx = px(x);
        let _ = writeln!(
            svg,
            r##"<line x1="{xx:.2}" y1="{TOP}" x2="{xx:.2}" y2="{:.2}" stroke="#eee"/><text x="{xx:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP + ph,
            TOP + ph + 18.0,
            x as u64
        );
        x += step;
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">communication steps</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(20 {:.2}) rotate(-90)" text-anchor="middle">squared distance to optimum</text>"#,
        TOP + ph / 2.0
    );

    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(c, v)| format!("{:.2},{:.2}", px(c as f64), py(ylog(v))))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = TOP + 16.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 16.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Series of a report, read back from its run CSVs: one median line per
/// algorithm, or one line per run with `per_seed`.
pub fn report_series(dir: &Path, report: &ExperimentReport, per_seed: bool) -> Result<Vec<Series>, LabError> {
    let mut series = Vec::new();
    for p in &report.parameters {
        let runs: Vec<_> = report.runs.iter().filter(|r| r.algo == p.algo).collect();
        let traces = runs
            .iter()
            .map(|r| read_trace_csv(&dir.join(&r.csv)))
            .collect::<Result<Vec<_>, _>>()?;
        if per_seed {
            for (r, t) in runs.iter().zip(traces) {
                series.push(Series {
                    label: format!("{} (seed {})", r.algo, r.seed),
                    points: t,
                });
            }
        } else {
            series.push(Series {
                label: p.algo.clone(),
                points: median_curve(&traces),
            });
        }
    }
    Ok(series)
}

/// Writes `plot.svg` for the report stored in `dir`.
pub fn write_plot(dir: &Path, report: &ExperimentReport, per_seed: bool) -> Result<(), LabError> {
    let series = report_series(dir, report, per_seed)?;
    let svg = render_svg(&report.name, &series)?;
    fs::write(dir.join("plot.svg"), svg)?;
    Ok(())
}
