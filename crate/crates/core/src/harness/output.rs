use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::telemetry::{telemetry_csv, TelemetryRecord};
use crate::error::{Error, Result};

/// Fraction of the data span added on each side of a plot axis.
pub const AXIS_MARGIN: f64 = 0.05;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const PAD: f64 = 48.0;

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<PathBuf> {
    std::fs::write(path, contents).map_err(|e| io_err(path, e))?;
    Ok(path.to_path_buf())
}

/// `[min − 5% span, max + 5% span]`; a flat series gets a unit-scale window.
pub fn axis_range(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let span = hi - lo;
    let pad = if span > 0.0 { AXIS_MARGIN * span } else { AXIS_MARGIN * lo.abs().max(1.0) };
    (lo - pad, hi + pad)
}

/// Single-series line plot. Axis limits are exposed as `data-*` attributes on the root.
pub fn line_plot_svg(title: &str, ylabel: &str, t: &[f64], y: &[f64]) -> String {
    let (x0, x1) = axis_range(t.iter().copied());
    let (y0, y1) = axis_range(y.iter().copied());
    let sx = |v: f64| PAD + (v - x0) / (x1 - x0) * (WIDTH - 2.0 * PAD);
    let sy = |v: f64| HEIGHT - PAD - (v - y0) / (y1 - y0) * (HEIGHT - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" data-x-min="{x0}" data-x-max="{x1}" data-y-min="{y0}" data-y-max="{y1}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * PAD,
        HEIGHT - 2.0 * PAD
    );
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{title}</text>"#, WIDTH / 2.0);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">t (s)</text>"#,
        WIDTH / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" font-size="12" transform="rotate(-90 14 {})" text-anchor="middle">{ylabel}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (v, anchor) in [(y0, HEIGHT - PAD), (y1, PAD)] {
        let _ = writeln!(s, r#"<text x="{}" y="{anchor}" font-size="10" text-anchor="end">{v:.3}</text>"#, PAD - 4.0);
    }
    for (v, x) in [(x0, PAD), (x1, WIDTH - PAD)] {
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" font-size="10" text-anchor="middle">{v:.2}</text>"#,
            HEIGHT - PAD + 14.0
        );
    }
    let points: Vec<String> =
        t.iter().zip(y).filter(|(_, v)| v.is_finite()).map(|(a, b)| format!("{:.2},{:.2}", sx(*a), sy(*b))).collect();
    let _ =
        writeln!(s, r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#, points.join(" "));
    s.push_str("</svg>\n");
    s
}

/// File stem, axis label and the value plotted per record.
type PlotSeries = (&'static str, &'static str, fn(&TelemetryRecord) -> f64);

/// Writes `telemetry.csv`, `summary.json` and, when `plots` is set, one SVG per norm.
pub fn emit_outputs<S: Serialize>(
    records: &[TelemetryRecord],
    summary: &S,
    n: usize,
    m: usize,
    dir: &Path,
    plots: bool,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = vec![
        write_file(&dir.join("telemetry.csv"), &telemetry_csv(records, n, m))?,
        write_file(&dir.join("summary.json"), &serde_json::to_string_pretty(summary)?)?,
    ];
    if plots {
        let t: Vec<f64> = records.iter().map(|r| r.t).collect();
        let series: [PlotSeries; 3] = [
            ("norm_e", "‖e‖", |r| r.norm_e),
            ("norm_xtilde", "‖x̃‖", |r| r.norm_xtilde),
            ("norm_xtildedot", "‖x̃̇‖", |r| r.norm_xtildedot),
        ];
        for (file, label, f) in series {
            let y: Vec<f64> = records.iter().map(f).collect();
            let svg = line_plot_svg(label, label, &t, &y);
            written.push(write_file(&dir.join(format!("{file}.svg")), &svg)?);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_range_margins() {
        let (lo, hi) = axis_range([1.0, 3.0, 2.0]);
        assert!((lo - 0.9).abs() < 1e-12 && (hi - 3.1).abs() < 1e-12);
        let (lo, hi) = axis_range([4.0, 4.0]);
        assert!(lo < 4.0 && hi > 4.0);
        assert_eq!(axis_range(std::iter::empty()), (0.0, 1.0));
    }

    #[test]
    fn svg_declares_ranges() {
        let svg = line_plot_svg("a", "b", &[0.0, 1.0], &[10.0, 20.0]);
        assert!(svg.contains(r#"data-y-min="9.5""#));
        assert!(svg.contains(r#"data-y-max="20.5""#));
        assert!(svg.starts_with("<svg"));
    }
}
