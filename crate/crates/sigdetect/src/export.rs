//! Signature CSV export: `id,split,adversarial,method,metric,v0,...`, values
//! in scientific notation with nine significant digits.

use std::path::Path;

use sigdetect_core::records::ExampleRecord;

use crate::error::{Error, Result};

/// One reparsed CSV row.
#[derive(Clone, Debug, PartialEq)]
pub struct SignatureRow {
    pub id: String,
    pub split: String,
    pub adversarial: u8,
    pub method: String,
    pub metric: String,
    pub values: Vec<f32>,
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Corrupt {
        path: path.to_path_buf(),
        detail: e.to_string(),
    }
}

/// Writes every signed record. Fails if a record has no signature or widths
/// differ.
pub fn export_signatures_csv(records: &[ExampleRecord], path: &Path) -> Result<usize> {
    let width = records
        .iter()
        .find_map(|r| r.signature.as_ref().map(|s| s.values.len()))
        .unwrap_or(0);
    let missing: Vec<String> = records.iter().filter(|r| r.signature.is_none()).map(|r| r.id.clone()).collect();
    if !missing.is_empty() {
        return Err(sigdetect_core::Error::MissingSignatures { ids: missing }.into());
    }
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["id".to_string(), "split".into(), "adversarial".into(), "method".into(), "metric".into()];
    header.extend((0..width).map(|i| format!("v{i}")));
    w.write_record(&header).map_err(csv_err(path))?;
    for r in records {
        let sig = r.signature.as_ref().expect("checked");
        if sig.values.len() != width {
            return Err(sigdetect_core::Error::WidthMismatch {
                expected: width,
                got: sig.values.len(),
            }
            .into());
        }
        let (method, metric) = r
            .attack
            .as_ref()
            .map(|a| (a.method.name(), a.metric.name()))
            .unwrap_or(("", ""));
        let mut row = vec![r.id.clone(), r.split.to_string(), r.label().to_string(), method.into(), metric.into()];
        row.extend(sig.values.iter().map(|v| format!("{v:.8e}")));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(Error::io(path))?;
    Ok(records.len())
}

pub fn read_signatures_csv(path: &Path) -> Result<Vec<SignatureRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let bad = |detail: String| Error::Record {
            path: path.to_path_buf(),
            line: k + 2,
            detail,
        };
        if rec.len() < 5 {
            return Err(bad("fewer than five columns".into()));
        }
        let values = rec
            .iter()
            .skip(5)
            .map(|v| v.parse::<f32>().map_err(|e| bad(format!("{v:?}: {e}"))))
            .collect::<Result<Vec<f32>>>()?;
        out.push(SignatureRow {
            id: rec[0].to_string(),
            split: rec[1].to_string(),
            adversarial: rec[2].parse().map_err(|e| bad(format!("adversarial flag: {e}")))?,
            method: rec[3].to_string(),
            metric: rec[4].to_string(),
            values,
        });
    }
    Ok(out)
}
