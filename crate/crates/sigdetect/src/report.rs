//! Report files: JSON (full report), CSV (curve points) and SVG (ROC and PR
//! curves on the unit square).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sigdetect_core::metrics::EvalReport;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Svg,
}

impl Format {
    pub const ALL: [Format; 3] = [Format::Json, Format::Csv, Format::Svg];

    fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
            Format::Svg => "svg",
        }
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    std::fs::write(path, bytes).map_err(Error::io(path))
}

/// `curve,x,y` rows: ROC points as (fpr, tpr), PR points as (recall, precision).
pub fn curves_csv(report: &EvalReport) -> String {
    let mut s = String::from("curve,x,y\n");
    for p in &report.roc {
        let _ = writeln!(s, "roc,{},{}", p.fpr, p.tpr);
    }
    for p in &report.pr {
        let _ = writeln!(s, "pr,{},{}", p.recall, p.precision);
    }
    s
}

const SIZE: f64 = 300.0;
const PAD: f64 = 40.0;

fn polyline(points: impl Iterator<Item = (f64, f64)>, x0: f64) -> String {
    let mut d = String::new();
    for (k, (x, y)) in points.enumerate() {
        let px = x0 + x * SIZE;
        let py = PAD + (1.0 - y) * SIZE;
        let _ = write!(d, "{}{:.2},{:.2}", if k == 0 { "M" } else { " L" }, px, py);
    }
    d
}

fn panel(s: &mut String, x0: f64, title: &str, xlabel: &str, ylabel: &str) {
    let (x1, y0, y1) = (x0 + SIZE, PAD, PAD + SIZE);
    let _ = writeln!(s, r##"<rect x="{x0}" y="{y0}" width="{SIZE}" height="{SIZE}" fill="none" stroke="#000"/>"##);
    for t in [0.0, 0.5, 1.0] {
        let px = x0 + t * SIZE;
        let py = PAD + (1.0 - t) * SIZE;
        let _ = writeln!(s, r#"<text x="{px}" y="{}" font-size="10" text-anchor="middle">{t}</text>"#, y1 + 14.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{t}</text>"#, x0 - 4.0, py + 3.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{title}</text>"#, (x0 + x1) / 2.0, y0 - 10.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">{xlabel}</text>"#, (x0 + x1) / 2.0, y1 + 30.0);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="11" text-anchor="middle" transform="rotate(-90 {} {})">{ylabel}</text>"#,
        x0 - 26.0,
        (y0 + y1) / 2.0,
        x0 - 26.0,
        (y0 + y1) / 2.0
    );
}

/// Side-by-side ROC and PR plots; the ROC panel carries the chance diagonal.
pub fn curves_svg(report: &EvalReport) -> String {
    let width = 2.0 * SIZE + 3.0 * PAD + 20.0;
    let height = SIZE + 2.0 * PAD + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let roc_x = PAD;
    let pr_x = 2.0 * PAD + SIZE + 20.0;
    panel(&mut s, roc_x, &format!("ROC (AUC {:.3})", report.auc_roc), "false positive rate", "true positive rate");
    panel(&mut s, pr_x, &format!("PR (AUC {:.3})", report.auc_pr), "recall", "precision");
    let _ = writeln!(
        s,
        r##"<line x1="{roc_x}" y1="{}" x2="{}" y2="{PAD}" stroke="#999" stroke-dasharray="4 3"/>"##,
        PAD + SIZE,
        roc_x + SIZE
    );
    let roc = polyline(report.roc.iter().map(|p| (p.fpr, p.tpr)), roc_x);
    let pr = polyline(report.pr.iter().map(|p| (p.recall, p.precision)), pr_x);
    let _ = writeln!(s, r##"<path d="{roc}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>"##);
    let _ = writeln!(s, r##"<path d="{pr}" fill="none" stroke="#d62728" stroke-width="1.5"/>"##);
    s.push_str("</svg>\n");
    s
}

/// Writes `<stem>.<ext>` for each requested format and returns the paths.
pub fn emit_report(report: &EvalReport, stem: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for &f in formats {
        let path = stem.with_extension(f.extension());
        match f {
            Format::Json => write_json(report, &path)?,
            Format::Csv => write_file(&path, curves_csv(report).as_bytes())?,
            Format::Svg => write_file(&path, curves_svg(report).as_bytes())?,
        }
        out.push(path);
    }
    Ok(out)
}
