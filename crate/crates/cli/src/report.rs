//! Static SVG scatter plots and the report index.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use synprobe::metrics::MetricKind;
use synprobe::probes::Family;
use synprobe::stats::{Granularity, RegressionRow, RowStatus};

use crate::artifacts::{file_hash, Stamp};
use crate::CliError;

const PANEL_W: f64 = 280.0;
const PANEL_H: f64 = 240.0;
const MARGIN: f64 = 44.0;
const COLUMNS: usize = 4;

/// Panel caption for a regression row: adjusted R² to four decimals and the
/// corrected p-value of β1 to four significant digits.
pub fn annotation(row: &RegressionRow) -> String {
    match (&row.status, &row.simple) {
        (RowStatus::Ok, Some(f)) => format!(
            "adj R² = {:.4}, p(β1) = {:.3e}",
            f.fit.adj_r2, f.p_beta1_corrected
        ),
        _ => "insufficient data".to_string(),
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn extent(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn panel(svg: &mut String, row: &RegressionRow, ox: f64, oy: f64) {
    let (x0, x1) = extent(&row.x);
    let (y0, y1) = extent(&row.y);
    let w = PANEL_W - 1.5 * MARGIN;
    let h = PANEL_H - 2.0 * MARGIN;
    let px = |x: f64| ox + MARGIN + (x - x0) / (x1 - x0) * w;
    let py = |y: f64| oy + MARGIN + h - (y - y0) / (y1 - y0) * h;
    let _ = writeln!(svg, r#"<g class="panel" data-group="{}">"#, escape(&row.group));
    let _ = writeln!(
        svg,
        r##"<rect x="{:.2}" y="{:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="#888"/>"##,
        ox + MARGIN,
        oy + MARGIN
    );
    let _ = writeln!(
        svg,
        r#"<text class="title" x="{:.2}" y="{:.2}" font-size="12">{}</text>"#,
        ox + MARGIN,
        oy + 16.0,
        escape(&row.group)
    );
    let _ = writeln!(
        svg,
        r#"<text class="annotation" x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
        ox + MARGIN,
        oy + 32.0,
        escape(&annotation(row))
    );
    for (k, (&x, &y)) in row.x.iter().zip(&row.y).enumerate() {
        let _ = writeln!(
            svg,
            r##"<circle class="marker" cx="{:.2}" cy="{:.2}" r="3" fill="#1f77b4"><title>{}</title></circle>"##,
            px(x),
            py(y),
            escape(&row.models[k])
        );
    }
    if let (RowStatus::Ok, Some(f)) = (&row.status, &row.simple) {
        let (b0, b1) = (f.fit.coefficients[0], f.fit.coefficients[1]);
        let _ = writeln!(
            svg,
            r##"<line class="fit" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#d62728" clip-path="url(#c)"/>"##,
            px(x0),
            py(b0 + b1 * x0),
            px(x1),
            py(b0 + b1 * x1)
        );
    }
    for (v, x, y) in [
        (x0, px(x0), oy + PANEL_H - MARGIN + 14.0),
        (x1, px(x1) - 24.0, oy + PANEL_H - MARGIN + 14.0),
    ] {
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{y:.2}" font-size="9">{v:.3}</text>"#);
    }
    for (v, y) in [(y0, py(y0)), (y1, py(y1) + 8.0)] {
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{y:.2}" font-size="9">{v:.3}</text>"#, ox + 4.0);
    }
    let _ = writeln!(svg, "</g>");
}

/// One SVG per probe family and granularity, one panel per group: probe
/// score against minimal-pair accuracy, one marker per model.
pub fn scatter_svg(family: Family, granularity: Granularity, rows: &[&RegressionRow], stamp: &Stamp) -> String {
    let cols = rows.len().clamp(1, COLUMNS);
    let lines = rows.len().div_ceil(COLUMNS).max(1);
    let (width, height) = (cols as f64 * PANEL_W, lines as f64 * PANEL_H + 30.0);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(
        svg,
        "<metadata>config_hash={} seed={}</metadata>",
        stamp.config_hash, stamp.seed
    );
    let metric = MetricKind::for_family(family).name();
    let _ = writeln!(
        svg,
        r#"<text x="8" y="20" font-size="14">{family} probe ({metric}) vs minimal-pair accuracy, {granularity}</text>"#
    );
    for (k, row) in rows.iter().enumerate() {
        let ox = (k % COLUMNS) as f64 * PANEL_W;
        let oy = 30.0 + (k / COLUMNS) as f64 * PANEL_H;
        panel(&mut svg, row, ox, oy);
    }
    svg.push_str("</svg>\n");
    svg
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndexEntry {
    pub path: String,
    pub sha256: String,
}

/// Checksums of the given files, relative to `out`.
pub fn index(out: &Path, files: &[String]) -> Result<Vec<IndexEntry>, CliError> {
    files
        .iter()
        .map(|f| {
            Ok(IndexEntry {
                path: f.clone(),
                sha256: file_hash(&out.join(f))?,
            })
        })
        .collect()
}
