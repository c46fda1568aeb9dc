//! CSV and SVG output for curves.

use std::fmt::Write as _;
use std::path::Path;

use super::froc::{FrocPoint, RocPoint};
use crate::Result;

pub fn write_froc_csv(points: &[FrocPoint], path: impl AsRef<Path>) -> Result<()> {
    write_rows(points, path)
}

pub fn read_froc_csv(path: impl AsRef<Path>) -> Result<Vec<FrocPoint>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

pub fn write_roc_csv(points: &[RocPoint], path: impl AsRef<Path>) -> Result<()> {
    write_rows(points, path)
}

/// One `scorer,auc` row per entry.
pub fn write_auc_csv(rows: &[(String, f64)], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["scorer", "auc"]).map_err(csv_err)?;
    for (name, auc) in rows {
        w.serialize((name, auc)).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_rows<T: serde::Serialize>(rows: &[T], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> crate::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e.into(),
        other => crate::Error::InvalidConfig(format!("csv: {other:?}")),
    }
}

/// A named FROC curve for plotting.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<FrocPoint>,
    /// Mark vertices with squares instead of circles.
    pub squares: bool,
    pub dashed: bool,
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Standalone SVG overlay of FROC curves: sensitivity against false
/// positives per volume.
pub fn froc_svg(title: &str, series: &[Series]) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 440.0, 60.0, 170.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let max_fp = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.fp_per_volume))
        .fold(0.0f64, f64::max)
        .max(1.0)
        .ceil();
    let x = |fp: f64| left + pw * fp / max_fp;
    let y = |s: f64| top + ph * (1.0 - s);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#, left + pw / 2.0, escape(title));
    for i in 0..=5 {
        let s = i as f64 / 5.0;
        let _ = writeln!(
            out,
            r##"<line x1="{left}" y1="{0:.1}" x2="{1:.1}" y2="{0:.1}" stroke="#ddd"/><text x="{2:.1}" y="{3:.1}" text-anchor="end">{s:.1}</text>"##,
            y(s),
            left + pw,
            left - 6.0,
            y(s) + 4.0
        );
    }
    let ticks = max_fp as usize;
    let step = ticks.div_ceil(10).max(1);
    for t in (0..=ticks).step_by(step) {
        let _ = writeln!(
            out,
            r##"<line x1="{0:.1}" y1="{top}" x2="{0:.1}" y2="{1:.1}" stroke="#ddd"/><text x="{0:.1}" y="{2:.1}" text-anchor="middle">{t}</text>"##,
            x(t as f64),
            top + ph,
            top + ph + 16.0
        );
    }
    let _ = writeln!(out, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">false positives per volume</text>"#, left + pw / 2.0, h - 12.0);
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">sensitivity</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s.points.iter().map(|p| format!("{:.2},{:.2}", x(p.fp_per_volume), y(p.sensitivity))).collect();
        let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#, pts.join(" "));
        for p in &s.points {
            let (cx, cy) = (x(p.fp_per_volume), y(p.sensitivity));
            if s.squares {
                let _ = writeln!(out, r#"<rect x="{:.2}" y="{:.2}" width="5" height="5" fill="{color}"/>"#, cx - 2.5, cy - 2.5);
            } else {
                let _ = writeln!(out, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="2.5" fill="{color}"/>"#);
            }
        }
        let ly = top + 14.0 + 18.0 * i as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 22.0,
            lx + 28.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
