//! Static SVG convergence plots: log-scale y axis, one polyline per
//! (file, column) pair, legend in input order, pure text output.

use std::path::{Path, PathBuf};
use thiserror::Error;

const WIDTH: f64 = 880.0;
const HEIGHT: f64 = 520.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 24.0;
const MARGIN_BOTTOM: f64 = 52.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("series `{label}` has no data points")]
    EmptySeries { label: String },
    #[error("column `{column}` not found in {file}")]
    MissingColumn { column: String, file: String },
    #[error("missing `iter` column in {file}")]
    MissingIter { file: String },
    #[error("bad number `{token}` in {file}")]
    BadNumber { token: String, file: String },
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Reads the requested columns from each CSV. Rows whose cell is empty are
/// skipped (optional columns stay empty when a run has no reference).
pub fn read_series(paths: &[PathBuf], columns: &[String]) -> Result<Vec<Series>, PlotError> {
    let mut series = Vec::new();
    for path in paths {
        let file_label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let names: Vec<&str> = header.split(',').collect();
        let iter_idx = names
            .iter()
            .position(|&n| n == "iter")
            .ok_or_else(|| PlotError::MissingIter {
                file: path.display().to_string(),
            })?;
        let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
        for column in columns {
            let col_idx = names.iter().position(|n| n == column).ok_or_else(|| {
                PlotError::MissingColumn {
                    column: column.clone(),
                    file: path.display().to_string(),
                }
            })?;
            let mut points = Vec::new();
            for row in &rows {
                if row.len() <= col_idx.max(iter_idx) {
                    continue;
                }
                let cell = row[col_idx].trim();
                if cell.is_empty() {
                    continue;
                }
                let iter: f64 = row[iter_idx].trim().parse().map_err(|_| PlotError::BadNumber {
                    token: row[iter_idx].to_string(),
                    file: path.display().to_string(),
                })?;
                let value: f64 = cell.parse().map_err(|_| PlotError::BadNumber {
                    token: cell.to_string(),
                    file: path.display().to_string(),
                })?;
                points.push((iter, value));
            }
            series.push(Series {
                label: format!("{file_label}:{column}"),
                points,
            });
        }
    }
    Ok(series)
}

/// Renders the series on a log y axis. Non-positive values are clipped to
/// the smallest positive value in the data and a warning annotation is added
/// to the plot.
pub fn render_svg(series: &[Series]) -> Result<String, PlotError> {
    if series.is_empty() {
        return Err(PlotError::EmptySeries {
            label: "(no series)".into(),
        });
    }
    for s in series {
        if s.points.is_empty() {
            return Err(PlotError::EmptySeries {
                label: s.label.clone(),
            });
        }
    }
    let floor = series
        .iter()
        .flat_map(|s| s.points.iter().map(|&(_, v)| v))
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 1e-16 };
    let mut clipped = false;
    let clip = |v: f64| {
        if v > 0.0 {
            v
        } else {
            floor
        }
    };
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            if y <= 0.0 {
                clipped = true;
            }
            let y = clip(y).log10();
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if x_max <= x_min {
        x_max = x_min + 1.0;
    }
    if y_max <= y_min {
        y_max = y_min + 1.0;
    }
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let to_px = |x: f64, logy: f64| {
        let px = MARGIN_LEFT + (x - x_min) / (x_max - x_min) * plot_w;
        let py = MARGIN_TOP + (y_max - logy) / (y_max - y_min) * plot_h;
        (px, py)
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n",
        l = MARGIN_LEFT,
        t = MARGIN_TOP,
        b = MARGIN_TOP + plot_h,
        r = MARGIN_LEFT + plot_w,
    ));
    // y ticks at whole decades, thinned to at most eight labels.
    let d_min = y_min.floor() as i64;
    let d_max = y_max.ceil() as i64;
    let decades = (d_max - d_min).max(1);
    let step = ((decades as f64) / 8.0).ceil() as i64;
    let mut d = d_min;
    while d <= d_max {
        let (_, py) = to_px(x_min, d as f64);
        if py >= MARGIN_TOP - 1.0 && py <= MARGIN_TOP + plot_h + 1.0 {
            svg.push_str(&format!(
                "<line x1=\"{x0}\" y1=\"{py:.2}\" x2=\"{x1}\" y2=\"{py:.2}\" stroke=\"#cccccc\" stroke-dasharray=\"3,3\"/>\n",
                x0 = MARGIN_LEFT,
                x1 = MARGIN_LEFT + plot_w,
            ));
            svg.push_str(&format!(
                "<text x=\"{x}\" y=\"{y:.2}\" font-size=\"12\" text-anchor=\"end\" dominant-baseline=\"middle\">1e{d}</text>\n",
                x = MARGIN_LEFT - 6.0,
                y = py,
            ));
        }
        d += step;
    }
    // x ticks at about six round positions.
    let raw_step = (x_max - x_min) / 6.0;
    let mag = 10f64.powf(raw_step.log10().floor());
    let x_step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|s| s * mag)
        .find(|&s| s >= raw_step)
        .unwrap_or(raw_step);
    let mut tick = (x_min / x_step).ceil() * x_step;
    while tick <= x_max + 1e-9 {
        let (px, _) = to_px(tick, y_min);
        svg.push_str(&format!(
            "<line x1=\"{px:.2}\" y1=\"{y0}\" x2=\"{px:.2}\" y2=\"{y1}\" stroke=\"black\"/>\n",
            y0 = MARGIN_TOP + plot_h,
            y1 = MARGIN_TOP + plot_h + 5.0,
        ));
        svg.push_str(&format!(
            "<text x=\"{px:.2}\" y=\"{y}\" font-size=\"12\" text-anchor=\"middle\">{tick}</text>\n",
            y = MARGIN_TOP + plot_h + 20.0,
        ));
        tick += x_step;
    }
    svg.push_str(&format!(
        "<text x=\"{x}\" y=\"{y}\" font-size=\"13\" text-anchor=\"middle\">iteration</text>\n",
        x = MARGIN_LEFT + plot_w / 2.0,
        y = HEIGHT - 12.0,
    ));
    // Polylines.
    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let mut coords = String::new();
        for &(x, y) in &s.points {
            let (px, py) = to_px(x, clip(y).log10());
            coords.push_str(&format!("{px:.2},{py:.2} "));
        }
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            coords.trim_end(),
        ));
    }
    // Legend, in input order.
    for (idx, s) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let y = MARGIN_TOP + 16.0 + 18.0 * idx as f64;
        let x = MARGIN_LEFT + plot_w - 240.0;
        svg.push_str(&format!(
            "<line x1=\"{x}\" y1=\"{y}\" x2=\"{x2}\" y2=\"{y}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            x2 = x + 24.0,
        ));
        svg.push_str(&format!(
            "<text x=\"{tx}\" y=\"{y}\" font-size=\"12\" dominant-baseline=\"middle\" class=\"legend\">{}</text>\n",
            escape(&s.label),
            tx = x + 30.0,
        ));
    }
    if clipped {
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" font-size=\"11\" fill=\"#b00020\" class=\"warning\">warning: non-positive values clipped to {floor:e} for the log axis</text>\n",
            x = MARGIN_LEFT,
            y = MARGIN_TOP + 4.0,
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn emit_svg_plot(
    paths: &[PathBuf],
    columns: &[String],
    out: &Path,
) -> Result<(), PlotError> {
    let series = read_series(paths, columns)?;
    let svg = render_svg(&series)?;
    std::fs::write(out, svg)?;
    Ok(())
}
