//! Fixed SVG template for training histories.
//!
//! The document is 720x540 with three stacked panels, one per series, in the
//! order `liou`, `lerrors`, `loss`. Each panel is a
//! `<g class="series" data-series="NAME">` holding a `<polyline>` through the
//! defined points and one `<circle data-epoch="E" data-value="V"/>` per
//! history row. `V` uses the shortest round-trip float form, or `nan` when the
//! value is undefined (such circles carry `class="undefined"` and sit on the
//! panel baseline). The selected epoch, if known, is a
//! `<line class="selected" data-epoch="E"/>` spanning all panels.

use std::fmt::Write as _;

use crate::history::HistoryRow;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 540.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 700.0;
const PANEL_TOP: [f64; 3] = [50.0, 215.0, 380.0];
const PANEL_HEIGHT: f64 = 130.0;

pub const SERIES: [&str; 3] = ["liou", "lerrors", "loss"];
const COLOURS: [&str; 3] = ["#1a7f37", "#cf222e", "#0969da"];
const LABELS: [&str; 3] = ["LIoU", "LErrors (LFP+LFN)", "Loss"];

fn series_values(rows: &[HistoryRow], k: usize) -> Vec<Option<f64>> {
    rows.iter()
        .map(|r| match k {
            0 => r.liou,
            1 => Some(r.lerrors as f64),
            _ => Some(r.loss),
        })
        .collect()
}

fn value_text(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| x.to_string())
}

pub fn render_report(rows: &[HistoryRow], selected_epoch: Option<usize>) -> String {
    let max_epoch = rows.iter().map(|r| r.epoch).max().unwrap_or(1).max(1) as f64;
    let min_epoch = rows.iter().map(|r| r.epoch).min().unwrap_or(0) as f64;
    let span = (max_epoch - min_epoch).max(1.0);
    let x_of = |epoch: usize| LEFT + (epoch as f64 - min_epoch) / span * (RIGHT - LEFT);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">Training history</text>"#, WIDTH / 2.0);

    for k in 0..3 {
        let values = series_values(rows, k);
        let top = PANEL_TOP[k];
        let bottom = top + PANEL_HEIGHT;
        let y_max = if k == 0 {
            1.0
        } else {
            values.iter().flatten().copied().fold(0.0_f64, f64::max).max(f64::MIN_POSITIVE)
        };
        let y_of = |v: f64| bottom - (v / y_max).clamp(0.0, 1.0) * PANEL_HEIGHT;

        let _ = writeln!(svg, r#"<g class="series" data-series="{}">"#, SERIES[k]);
        let _ = writeln!(
            svg,
            r##"<rect x="{LEFT}" y="{top}" width="{}" height="{PANEL_HEIGHT}" fill="none" stroke="#999"/>"##,
            RIGHT - LEFT
        );
        let _ = writeln!(svg, r#"<text x="{LEFT}" y="{}">{}</text>"#, top - 6.0, LABELS[k]);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, LEFT - 6.0, top + 4.0, fmt_axis(y_max));
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">0</text>"#, LEFT - 6.0, bottom + 4.0);
        let points: Vec<String> = rows
            .iter()
            .zip(&values)
            .filter_map(|(r, v)| v.map(|v| format!("{:.2},{:.2}", x_of(r.epoch), y_of(v))))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            COLOURS[k],
            points.join(" ")
        );
        for (r, v) in rows.iter().zip(&values) {
            let (class, cy) = match v {
                Some(v) => ("point", y_of(*v)),
                None => ("undefined", bottom),
            };
            let _ = writeln!(
                svg,
                r#"<circle class="{class}" cx="{:.2}" cy="{cy:.2}" r="2" fill="{}" data-epoch="{}" data-value="{}"/>"#,
                x_of(r.epoch),
                COLOURS[k],
                r.epoch,
                value_text(*v)
            );
        }
        let _ = writeln!(svg, "</g>");
    }

    let axis_y = PANEL_TOP[2] + PANEL_HEIGHT + 18.0;
    let _ = writeln!(svg, r#"<text x="{LEFT}" y="{axis_y}">epoch {}</text>"#, min_epoch);
    let _ = writeln!(svg, r#"<text x="{RIGHT}" y="{axis_y}" text-anchor="end">epoch {}</text>"#, max_epoch);
    if let Some(epoch) = selected_epoch {
        let x = x_of(epoch);
        let _ = writeln!(
            svg,
            r##"<line class="selected" data-epoch="{epoch}" x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="#8250df" stroke-dasharray="4 3"/>"##,
            PANEL_TOP[0],
            PANEL_TOP[2] + PANEL_HEIGHT
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn fmt_axis(v: f64) -> String {
    if v >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

/// Data points `(series, epoch, value)` read back from a rendered report.
pub fn parse_report_points(svg: &str) -> Vec<(String, usize, Option<f64>)> {
    let mut series = String::new();
    let mut out = Vec::new();
    for line in svg.lines() {
        if let Some(name) = attr(line, "data-series") {
            series = name.to_string();
        }
        if line.starts_with("<circle") {
            let epoch = attr(line, "data-epoch").and_then(|s| s.parse().ok());
            let value = attr(line, "data-value");
            if let (Some(epoch), Some(value)) = (epoch, value) {
                out.push((series.clone(), epoch, value.parse().ok().filter(|v: &f64| !v.is_nan())));
            }
        }
    }
    out
}

/// Epoch of the selection marker, if present.
pub fn parse_selected_epoch(svg: &str) -> Option<usize> {
    svg.lines()
        .find(|l| l.starts_with(r#"<line class="selected""#))
        .and_then(|l| attr(l, "data-epoch"))
        .and_then(|s| s.parse().ok())
}

fn attr<'a>(line: &'a str, name: &str) -> Option<&'a str> {
    let key = format!(" {name}=\"");
    let start = line.find(&key)? + key.len();
    let len = line[start..].find('"')?;
    Some(&line[start..start + len])
}
