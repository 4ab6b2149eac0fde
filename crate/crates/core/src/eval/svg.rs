//! Self-contained SVG rendering of ROC curves. Vertices are written in unit
//! (fpr, tpr) coordinates with the same number formatting as the ROC CSV and
//! mapped to pixels by a group transform, so the polyline can be compared
//! with the CSV value for value.

use std::fmt::Write as _;

use super::roc::RocPoint;
use crate::error::{Error, Result};

const SIZE: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub struct Series<'a> {
    pub label: String,
    pub points: &'a [RocPoint],
}

pub fn roc_svg(title: &str, series: &[Series<'_>]) -> String {
    let total = SIZE + 2.0 * MARGIN;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">False positive rate</text>"#,
        MARGIN + SIZE / 2.0,
        total - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" font-size="14" transform="rotate(-90 15 {})">True positive rate</text>"#,
        MARGIN + SIZE / 2.0,
        MARGIN + SIZE / 2.0
    );
    let _ = writeln!(
        s,
        r#"<g transform="translate({MARGIN} {}) scale({SIZE} -{SIZE})">"#,
        MARGIN + SIZE
    );
    let _ = writeln!(
        s,
        r#"<line x1="0" y1="0" x2="1" y2="1" stroke="gray" stroke-dasharray="0.01" stroke-width="0.002"/>"#
    );
    for (i, ser) in series.iter().enumerate() {
        let pts: Vec<String> = ser.points.iter().map(|p| format!("{},{}", p.fpr, p.tpr)).collect();
        let _ = writeln!(
            s,
            r#"<polyline data-label="{}" fill="none" stroke="{}" stroke-width="0.005" points="{}"/>"#,
            escape(&ser.label),
            COLORS[i % COLORS.len()],
            pts.join(" ")
        );
    }
    let _ = writeln!(s, "</g>");
    for (i, ser) in series.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" fill="{}">{}</text>"#,
            MARGIN + SIZE * 0.45,
            MARGIN + SIZE - 10.0 - 16.0 * (series.len() - 1 - i) as f64,
            COLORS[i % COLORS.len()],
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Extracts the `(x, y)` vertices of every `<polyline>` in document order.
pub fn polyline_vertices(svg: &str) -> Result<Vec<Vec<(f64, f64)>>> {
    let mut out = Vec::new();
    for chunk in svg.split("<polyline").skip(1) {
        let start = chunk
            .find("points=\"")
            .ok_or_else(|| Error::invalid("polyline without points"))?
            + "points=\"".len();
        let end = chunk[start..]
            .find('"')
            .ok_or_else(|| Error::invalid("unterminated points attribute"))?;
        let verts = chunk[start..start + end]
            .split_whitespace()
            .map(|pair| {
                let (x, y) = pair
                    .split_once(',')
                    .ok_or_else(|| Error::invalid(format!("bad vertex {pair:?}")))?;
                let parse = |v: &str| v.parse::<f64>().map_err(|_| Error::invalid(format!("bad coordinate {v:?}")));
                Ok((parse(x)?, parse(y)?))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(verts);
    }
    Ok(out)
}
