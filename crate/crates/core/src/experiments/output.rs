//! CSV, JSON and SVG emission.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::config::{Axis, Metric, SweepConfig, View};
use super::runner::{Aggregate, AlgorithmSummary, GridPoint, PointSummary, SweepResult};

/// Reported when `git describe` is unavailable.
pub const VERSION_UNKNOWN: &str = "unknown";

/// Contents of the JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub name: String,
    pub version: String,
    pub seed: u64,
    pub trials: usize,
    pub wall_clock_s: f64,
    /// Seconds since the Unix epoch when the summary was written.
    pub written_at: u64,
    pub config: SweepConfig,
    pub points: Vec<PointSummary>,
}

fn git_describe() -> String {
    let manifest = env!("CARGO_MANIFEST_DIR");
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .current_dir(manifest)
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| VERSION_UNKNOWN.to_string())
}

impl SweepSummary {
    pub fn new(result: &SweepResult) -> Self {
        Self {
            name: result.config.name.clone(),
            version: format!("{} ({})", env!("CARGO_PKG_VERSION"), git_describe()),
            seed: result.config.seed,
            trials: result.config.trials,
            wall_clock_s: result.wall_clock_s,
            written_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            config: result.config.clone(),
            points: result.points.clone(),
        }
    }
}

fn axis_value(point: &GridPoint, axis: Axis) -> String {
    match axis {
        Axis::SnrDb => point.snr_db.to_string(),
        Axis::PilotSlots => point.pilot_slots.to_string(),
        Axis::Psi => point.psi.to_string(),
        Axis::Antenna => unreachable!("antenna views are rendered from profiles"),
    }
}

fn metric_of(summary: &AlgorithmSummary, metric: Metric) -> Option<Aggregate> {
    match metric {
        Metric::Vrer => summary.vrer,
        Metric::CorrectDetection => summary.correct_detection,
        Metric::Nmse => summary.nmse,
        Metric::Se => summary.se,
        Metric::Belief => None,
    }
}

/// Views written when the configuration lists none: one per metric that
/// some configured algorithm produces, against the first axis that takes
/// more than one value (SNR otherwise).
pub(crate) fn default_views(config: &SweepConfig) -> Vec<View> {
    let psi_len = config.psi_values().map(|v| v.len()).unwrap_or(1);
    let x = if config.observation.snr_db.len() > 1 {
        Axis::SnrDb
    } else if config.observation.pilot_slots.len() > 1 {
        Axis::PilotSlots
    } else if psi_len > 1 {
        Axis::Psi
    } else {
        Axis::SnrDb
    };
    let mut metrics = Vec::new();
    if config.algorithms.iter().any(|a| a.detects()) {
        metrics.push(Metric::CorrectDetection);
    }
    if config.algorithms.iter().any(|a| a.estimates()) {
        metrics.extend([Metric::Nmse, Metric::Se]);
    }
    metrics
        .into_iter()
        .map(|metric| View {
            name: format!("{}_{}", config.name, metric.name()),
            metric,
            x,
        })
        .collect()
}

/// CSV text of one view: `sweep_var, <alg>_mean, <alg>_stderr, …`, one row
/// per grid point (per antenna for belief profiles). Missing values are
/// empty cells.
pub fn render_csv(result: &SweepResult, view: &View) -> Result<String> {
    let algorithms = &result.config.algorithms;
    let mut out = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::InvalidParameter(format!("csv: {e}"));

    if view.metric == Metric::Belief {
        out.write_record(["sweep_var", "vrdomp_mean", "vrdomp_stderr", "visible"])
            .map_err(csv_err)?;
        if let Some(profile) = result.points.first().and_then(|p| p.belief_profile.as_ref()) {
            for i in 0..profile.mean.len() {
                out.write_record([
                    (i + 1).to_string(),
                    profile.mean[i].to_string(),
                    profile.stderr[i].to_string(),
                    profile.visible[i].to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
    } else {
        let mut header = vec!["sweep_var".to_string()];
        for alg in algorithms {
            header.push(format!("{}_mean", alg.name()));
            header.push(format!("{}_stderr", alg.name()));
        }
        out.write_record(&header).map_err(csv_err)?;
        for point in &result.points {
            let mut row = vec![axis_value(&point.grid, view.x)];
            for alg in algorithms {
                let agg = point
                    .algorithms
                    .iter()
                    .find(|s| s.algorithm == *alg)
                    .and_then(|s| metric_of(s, view.metric));
                match agg {
                    Some(a) => {
                        row.push(a.mean.to_string());
                        row.push(a.stderr.to_string());
                    }
                    None => {
                        row.push(String::new());
                        row.push(String::new());
                    }
                }
            }
            out.write_record(&row).map_err(csv_err)?;
        }
    }
    let bytes = out
        .into_inner()
        .map_err(|e| Error::InvalidParameter(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Line plot of one view, log-scaled in y for NMSE.
pub fn render_svg(result: &SweepResult, view: &View) -> String {
    let (w, h, pad) = (640.0, 420.0, 60.0);
    let log_y = view.metric == Metric::Nmse;
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    if view.metric == Metric::Belief {
        if let Some(p) = result.points.first().and_then(|p| p.belief_profile.as_ref()) {
            series.push((
                "vrdomp".into(),
                p.mean.iter().enumerate().map(|(i, &v)| ((i + 1) as f64, v)).collect(),
            ));
            series.push((
                "visible".into(),
                p.visible.iter().enumerate().map(|(i, &v)| ((i + 1) as f64, v)).collect(),
            ));
        }
    } else {
        for alg in &result.config.algorithms {
            let pts: Vec<(f64, f64)> = result
                .points
                .iter()
                .filter_map(|p| {
                    let x = axis_value(&p.grid, view.x).parse::<f64>().ok()?;
                    let s = p.algorithms.iter().find(|s| s.algorithm == *alg)?;
                    Some((x, metric_of(s, view.metric)?.mean))
                })
                .filter(|&(_, y)| !log_y || y > 0.0)
                .collect();
            if !pts.is_empty() {
                series.push((alg.name().to_string(), pts));
            }
        }
    }
    let tr = |v: f64| if log_y { v.log10() } else { v };
    let all: Vec<(f64, f64)> = series.iter().flat_map(|(_, p)| p.iter().map(|&(x, y)| (x, tr(y)))).collect();
    let span = |vals: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    };
    let (x0, x1) = span(&mut all.iter().map(|p| p.0));
    let (y0, y1) = span(&mut all.iter().map(|p| p.1));
    let px = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    let _ = writeln!(svg, r#"<text x="{}" y="30" text-anchor="middle">{}</text>"#, w / 2.0, view.name);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        w / 2.0,
        h - 15.0,
        view.x.name()
    );
    let ylabel = if log_y { format!("log10 {}", view.metric.name()) } else { view.metric.name().to_string() };
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">{ylabel}</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (v, anchor, x, y) in [
        (x0, "start", px(x0), h - pad + 16.0),
        (x1, "end", px(x1), h - pad + 16.0),
    ] {
        let _ = writeln!(svg, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{v:.3}</text>"#);
    }
    for v in [y0, y1] {
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{v:.3}</text>"#, pad - 6.0, py(v) + 4.0);
    }
    for (i, (name, pts)) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(tr(y)))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let ly = pad + 16.0 * (i as f64 + 1.0);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{ly}" fill="{colour}">{name}</text>"#,
            w - pad - 90.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Write every view as `<dir>/<view>.csv` (plus `.svg` when plots are on)
/// and the JSON summary as `<dir>/<name>_summary.json`. Returns the paths
/// written.
pub fn emit_results(result: &SweepResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let views = if result.config.output.views.is_empty() {
        default_views(&result.config)
    } else {
        result.config.output.views.clone()
    };
    let mut written = Vec::new();
    for view in &views {
        let path = dir.join(format!("{}.csv", view.name));
        write(&path, &render_csv(result, view)?)?;
        written.push(path);
        if result.config.output.plots {
            let path = dir.join(format!("{}.svg", view.name));
            write(&path, &render_svg(result, view))?;
            written.push(path);
        }
    }
    let summary = SweepSummary::new(result);
    let path = dir.join(format!("{}_summary.json", result.config.name));
    let json = serde_json::to_string_pretty(&summary)?;
    write(&path, &json)?;
    written.push(path);
    Ok(written)
}
