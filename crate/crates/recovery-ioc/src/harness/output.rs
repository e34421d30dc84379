//! Deterministic file output: CSV tables and JSON reports. All floats
//! go through the 17-significant-digit formatter so reruns with the
//! same seed produce byte-identical files.

use std::path::Path;

use serde::Serialize;

use super::sweep::{ComparisonRow, StartRecord};
use crate::trajectory::format_float;

pub fn write_string(path: &Path, content: &str) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, content)
}

pub fn write_report_json<T: Serialize>(path: &Path, value: &T) -> Result<(), super::HarnessError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_string(path, &text)?;
    Ok(())
}

fn opt_float(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

fn opt_usize(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `start,l_min,e_omega` rows; empty fields for runs without a result.
pub fn records_csv(records: &[StartRecord]) -> String {
    let mut out = String::from("start,l_min,e_omega\n");
    for rec in records {
        out.push_str(&format!(
            "{},{},{}\n",
            rec.start,
            opt_usize(rec.l_min),
            opt_float(rec.e_omega)
        ));
    }
    out
}

/// `start,l,e_recovery,e_kkt` rows for the comparison curves.
pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("start,l,e_recovery,e_kkt\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.start,
            row.l,
            opt_float(row.e_recovery),
            opt_float(row.e_kkt)
        ));
    }
    out
}

/// Generic aggregate table: a header plus preformatted rows.
pub fn aggregate_csv(header: &str, rows: &[Vec<String>]) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn float_cell(v: f64) -> String {
    format_float(v)
}

pub fn opt_float_cell(v: Option<f64>) -> String {
    opt_float(v)
}
