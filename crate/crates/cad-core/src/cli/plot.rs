//! Minimal standalone SVG line plots. Each series is scaled to its own
//! vertical range so curves with different units share one panel; the
//! legend carries each series' numeric range.

use crate::error::{CadError, Result};
use std::fmt::Write as _;
use std::path::Path;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series<'a> {
    pub label: &'a str,
    pub points: &'a [(f64, f64)],
}

pub fn write_line_plot(
    path: &Path,
    title: &str,
    x_label: &str,
    series: &[Series<'_>],
) -> Result<()> {
    if series.is_empty() || series.iter().any(|s| s.points.is_empty()) {
        return Err(CadError::contract("plot needs at least one non-empty series"));
    }
    let x_min = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .fold(f64::INFINITY, f64::min);
    let x_max = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let x_span = (x_max - x_min).max(1e-12);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;

    let mut svg = String::new();
    write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"16\">{}</text>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"12\">{}</text>\n\
         <rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{plot_w}\" height=\"{plot_h}\" \
         fill=\"none\" stroke=\"#333\"/>\n",
        WIDTH / 2.0,
        escape(title),
        WIDTH / 2.0,
        HEIGHT - 16.0,
        escape(x_label),
    )
    .unwrap();

    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let y_min = s.points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let y_max = s.points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let y_span = (y_max - y_min).max(1e-12);
        let mut pts = String::new();
        for (x, y) in s.points {
            let px = MARGIN + (x - x_min) / x_span * plot_w;
            let py = HEIGHT - MARGIN - (y - y_min) / y_span * plot_h;
            write!(pts, "{px:.2},{py:.2} ").unwrap();
        }
        write!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n\
             <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" \
             fill=\"{color}\">{} [{:.4}, {:.4}]</text>\n",
            pts.trim_end(),
            MARGIN + 8.0,
            MARGIN + 18.0 + 16.0 * i as f64,
            escape(s.label),
            y_min,
            y_max,
        )
        .unwrap();
    }
    // X tick labels at the ends.
    write!(
        svg,
        "<text x=\"{MARGIN}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"11\">{x_min:.3}</text>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"11\">{x_max:.3}</text>\n</svg>\n",
        HEIGHT - MARGIN + 16.0,
        WIDTH - MARGIN,
        HEIGHT - MARGIN + 16.0,
    )
    .unwrap();

    std::fs::write(path, svg).map_err(|e| CadError::io(path, e))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
