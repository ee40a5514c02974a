use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dataio::TargetMatrix;
use crate::error::{Error, Result};

const SIZE: f64 = 560.0;
const MARGIN: f64 = 70.0;
const COLORS: [&str; 2] = ["#1f4e79", "#c0392b"];

#[derive(Debug, Clone, PartialEq)]
pub struct GaitogramFiles {
    pub csv: PathBuf,
    pub svg: PathBuf,
}

/// Writes `<stem>.csv` and `<stem>.svg` for a pelvis-frame COP trace, with an
/// optional predicted trace drawn on top.
pub fn export_gaitogram(truth: &TargetMatrix, predicted: Option<&TargetMatrix>, stem: &Path) -> Result<GaitogramFiles> {
    if truth.is_empty() || predicted.is_some_and(|p| p.is_empty()) {
        return Err(Error::EmptyTrace);
    }
    if let Some(p) = predicted {
        if p.rows() != truth.rows() {
            return Err(Error::ShapeMismatch(format!("{} predicted vs {} measured samples", p.rows(), truth.rows())));
        }
    }
    let csv_path = stem.with_extension("csv");
    let svg_path = stem.with_extension("svg");

    let mut csv = String::new();
    match predicted {
        None => {
            csv.push_str("x_anterior_mm,y_lateral_mm\n");
            for t in &truth.data {
                let _ = writeln!(csv, "{},{}", t[0], t[1]);
            }
        }
        Some(p) => {
            csv.push_str("x_anterior_mm,y_lateral_mm,x_predicted_mm,y_predicted_mm\n");
            for (t, q) in truth.data.iter().zip(&p.data) {
                let _ = writeln!(csv, "{},{},{},{}", t[0], t[1], q[0], q[1]);
            }
        }
    }
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;

    let mut traces = vec![("measured", truth)];
    if let Some(p) = predicted {
        traces.push(("predicted", p));
    }
    std::fs::write(&svg_path, render_svg(&traces)).map_err(|e| Error::io(&svg_path, e))?;
    Ok(GaitogramFiles { csv: csv_path, svg: svg_path })
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    [1.0, 2.0, 5.0, 10.0].into_iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag)
}

/// Lateral on the horizontal axis, anterior on the vertical axis, equal scales.
fn render_svg(traces: &[(&str, &TargetMatrix)]) -> String {
    let pts = traces.iter().flat_map(|(_, t)| t.data.iter());
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in pts {
        xmin = xmin.min(p[1]);
        xmax = xmax.max(p[1]);
        ymin = ymin.min(p[0]);
        ymax = ymax.max(p[0]);
    }
    let span = (xmax - xmin).max(ymax - ymin).max(1.0) * 1.1;
    let (cx, cy) = ((xmin + xmax) / 2.0, (ymin + ymax) / 2.0);
    let (x0, y0) = (cx - span / 2.0, cy - span / 2.0);
    let sx = |v: f64| MARGIN + (v - x0) / span * SIZE;
    let sy = |v: f64| MARGIN + SIZE - (v - y0) / span * SIZE;
    let w = SIZE + 2.0 * MARGIN;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{w}" viewBox="0 0 {w} {w}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{w}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
    );
    let step = nice_step(span);
    let mut v = (x0 / step).ceil() * step;
    while v <= x0 + span {
        let x = sx(v);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, MARGIN + SIZE, MARGIN + SIZE + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, MARGIN + SIZE + 19.0, v.round());
        v += step;
    }
    let mut v = (y0 / step).ceil() * step;
    while v <= y0 + span {
        let y = sy(v);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{MARGIN}" y2="{y:.2}" stroke="black"/>"#, MARGIN - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, MARGIN - 8.0, y + 4.0, v.round());
        v += step;
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">COP y, lateral [mm]</text>"#,
        MARGIN + SIZE / 2.0,
        MARGIN + SIZE + 45.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate({:.2},{:.2}) rotate(-90)" text-anchor="middle">COP x, anterior [mm]</text>"#,
        MARGIN - 48.0,
        MARGIN + SIZE / 2.0
    );
    for (i, (_, t)) in traces.iter().enumerate() {
        let mut d = String::new();
        for (k, p) in t.data.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2}", if k == 0 { "M" } else { " L" }, sx(p[1]), sy(p[0]));
        }
        let _ = writeln!(
            s,
            r#"<path d="{d}" fill="none" stroke="{}" stroke-width="0.8" stroke-opacity="0.8"/>"#,
            COLORS[i % 2]
        );
    }
    if traces.len() > 1 {
        for (i, (name, _)) in traces.iter().enumerate() {
            let y = MARGIN + 18.0 + 18.0 * i as f64;
            let x = MARGIN + 12.0;
            let _ = writeln!(
                s,
                r#"<g class="legend"><line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="2"/><text x="{}" y="{}">{name}</text></g>"#,
                x + 24.0,
                COLORS[i % 2],
                x + 30.0,
                y + 4.0
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
