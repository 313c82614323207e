use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::evaluate::ErrorSummary;
use super::run::RunTrace;
use crate::error::{Error, Result};
use crate::paths::ReferencePath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    /// Reference and driven positions.
    Overlay,
    /// Steering and throttle over time.
    ControlProfile,
    /// Mean cross-track error per reference index.
    ErrorCurve,
    /// Position with measured and reference speed.
    SpeedHeatmap,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] = [
        PlotKind::Overlay,
        PlotKind::ControlProfile,
        PlotKind::ErrorCurve,
        PlotKind::SpeedHeatmap,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PlotKind::Overlay => "overlay",
            PlotKind::ControlProfile => "control_profile",
            PlotKind::ErrorCurve => "error_curve",
            PlotKind::SpeedHeatmap => "speed_heatmap",
        }
    }
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown plot kind {s:?}")))
    }
}

/// What a plot is drawn from.
#[derive(Debug, Clone, Copy)]
pub struct PlotInput<'a> {
    pub path: &'a ReferencePath,
    pub trace: Option<&'a RunTrace>,
    pub summary: Option<&'a ErrorSummary>,
}

/// Column names and rows of a plot table.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotTable {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl PlotTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

fn need_trace<'a>(input: &PlotInput<'a>, kind: PlotKind) -> Result<&'a RunTrace> {
    input
        .trace
        .ok_or_else(|| Error::InvalidParameter(format!("{} needs a run trace", kind.as_str())))
}

pub fn plot_table(kind: PlotKind, input: &PlotInput<'_>) -> Result<PlotTable> {
    let samples = input.path.samples();
    let table = match kind {
        PlotKind::Overlay => {
            let trace = need_trace(input, kind)?;
            PlotTable {
                columns: vec!["t", "ref_x", "ref_y", "x", "y"],
                rows: trace
                    .records
                    .iter()
                    .map(|r| {
                        let s = samples[r.ref_idx];
                        vec![r.t, s.x, s.y, r.truth.x, r.truth.y]
                    })
                    .collect(),
            }
        }
        PlotKind::ControlProfile => PlotTable {
            columns: vec!["t", "steering", "throttle"],
            rows: need_trace(input, kind)?
                .records
                .iter()
                .map(|r| vec![r.t, r.command.steering(), r.command.throttle()])
                .collect(),
        },
        PlotKind::ErrorCurve => {
            let summary = input
                .summary
                .ok_or_else(|| Error::InvalidParameter("error_curve needs an error summary".into()))?;
            PlotTable {
                columns: vec!["ref_idx", "s", "mean_ct_err", "count"],
                rows: summary
                    .per_index_mean
                    .iter()
                    .zip(&summary.per_index_count)
                    .enumerate()
                    .filter(|(_, (_, &c))| c > 0)
                    .map(|(i, (&m, &c))| vec![i as f64, samples[i].s, m, c as f64])
                    .collect(),
            }
        }
        PlotKind::SpeedHeatmap => PlotTable {
            columns: vec!["x", "y", "v", "v_ref"],
            rows: need_trace(input, kind)?
                .records
                .iter()
                .map(|r| vec![r.truth.x, r.truth.y, r.truth.v, samples[r.ref_idx].v])
                .collect(),
        },
    };
    Ok(table)
}

/// Writes `<out_dir>/<kind>.csv`, plus a line plot as `<kind>.svg` when
/// `svg` is set. Returns the written files.
pub fn export_plots(kind: PlotKind, input: &PlotInput<'_>, out_dir: &Path, svg: bool) -> Result<Vec<PathBuf>> {
    let table = plot_table(kind, input)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let csv_path = out_dir.join(format!("{}.csv", kind.as_str()));
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    let mut written = vec![csv_path];
    if svg {
        let svg_path = out_dir.join(format!("{}.svg", kind.as_str()));
        std::fs::write(&svg_path, render_svg(kind, &table)).map_err(|e| Error::io(&svg_path, e))?;
        written.push(svg_path);
    }
    Ok(written)
}

/// (x column, y column, stroke) per drawn series.
fn series(kind: PlotKind) -> &'static [(&'static str, &'static str, &'static str)] {
    match kind {
        PlotKind::Overlay => &[("ref_x", "ref_y", "#888888"), ("x", "y", "#d62728")],
        PlotKind::ControlProfile => &[("t", "steering", "#1f77b4"), ("t", "throttle", "#ff7f0e")],
        PlotKind::ErrorCurve => &[("s", "mean_ct_err", "#2ca02c")],
        PlotKind::SpeedHeatmap => &[("x", "y", "#9467bd")],
    }
}

fn render_svg(kind: PlotKind, table: &PlotTable) -> String {
    const W: f64 = 800.0;
    const H: f64 = 500.0;
    const PAD: f64 = 40.0;
    let lines: Vec<(Vec<f64>, Vec<f64>, &str)> = series(kind)
        .iter()
        .filter_map(|(x, y, c)| Some((table.column(x)?, table.column(y)?, *c)))
        .collect();
    let bounds = |vals: &mut dyn Iterator<Item = f64>| {
        vals.filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (x0, x1) = bounds(&mut lines.iter().flat_map(|l| l.0.iter().copied()));
    let (y0, y1) = bounds(&mut lines.iter().flat_map(|l| l.1.iter().copied()));
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let (sx, sy) = ((W - 2.0 * PAD) / span(x0, x1), (H - 2.0 * PAD) / span(y0, y1));
    // equal axes for the map views
    let (sx, sy) = if matches!(kind, PlotKind::Overlay | PlotKind::SpeedHeatmap) {
        (sx.min(sy), sx.min(sy))
    } else {
        (sx, sy)
    };

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{PAD}" y="24" font-family="sans-serif" font-size="14">{}</text>"#, kind.as_str());
    for (xs, ys, color) in &lines {
        let pts: Vec<String> = xs
            .iter()
            .zip(ys)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(x, y)| format!("{:.2},{:.2}", PAD + (x - x0) * sx, H - PAD - (y - y0) * sy))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
    }
    out.push_str("</svg>\n");
    out
}
