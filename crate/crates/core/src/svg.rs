//! Minimal standalone SVG scatter plots.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::ArrayView2;

use crate::error::{Error, Result};

pub const SOURCE_COLOR: &str = "#1f5fbf";
pub const GENERATED_COLOR: &str = "#d1342f";

const SIZE: f64 = 480.0;
const MARGIN: f64 = 30.0;

pub struct Layer<'a> {
    pub points: ArrayView2<'a, f64>,
    pub color: &'a str,
    pub label: &'a str,
}

/// Renders layers in order onto a shared square frame with axes through the origin.
pub fn scatter_svg(layers: &[Layer]) -> String {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for l in layers {
        for &v in l.points.iter().filter(|v| v.is_finite()) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !(lo < hi) {
        lo = -1.0;
        hi = 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let span = SIZE - 2.0 * MARGIN;
    let sx = |v: f64| MARGIN + (v - lo) / (hi - lo) * span;
    let sy = |v: f64| SIZE - MARGIN - (v - lo) / (hi - lo) * span;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{span}" height="{span}" fill="none" stroke="#888"/>"##
    );
    if lo < 0.0 && hi > 0.0 {
        let (x0, y0) = (sx(0.0), sy(0.0));
        let end = SIZE - MARGIN;
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN}" y1="{y0:.2}" x2="{end}" y2="{y0:.2}" stroke="#bbb"/><line x1="{x0:.2}" y1="{MARGIN}" x2="{x0:.2}" y2="{end}" stroke="#bbb"/>"##
        );
    }
    let _ = writeln!(
        out,
        r##"<text x="{MARGIN}" y="{:.0}" font-size="11" fill="#555">[{lo:.2}, {hi:.2}]</text>"##,
        SIZE - 10.0
    );
    for (k, l) in layers.iter().enumerate() {
        let _ = writeln!(out, r#"<g fill="{}" fill-opacity="0.6">"#, l.color);
        for row in l.points.rows() {
            if row.len() < 2 || !row[0].is_finite() || !row[1].is_finite() {
                continue;
            }
            let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="1.8"/>"#, sx(row[0]), sy(row[1]));
        }
        let _ = writeln!(out, "</g>");
        let _ = writeln!(
            out,
            r#"<text x="{:.0}" y="{:.0}" font-size="12" fill="{}">{}</text>"#,
            MARGIN + 4.0,
            MARGIN + 14.0 * (k + 1) as f64,
            l.color,
            l.label
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn write_scatter(path: &Path, layers: &[Layer]) -> Result<()> {
    std::fs::write(path, scatter_svg(layers)).map_err(|e| Error::io(path, e))
}
