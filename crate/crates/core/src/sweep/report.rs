//! CSV and JSON artefacts of sweeps, matrices and comparisons.
//!
//! Floating-point values are written with Rust's shortest round-trip
//! formatting, so re-reading a CSV reproduces the exact values.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{RobustnessCurve, SweepError, TrainTestMatrix};

/// Curve rows `kind,degree,mean_mm,std_mm,n`; with `with_label`, a leading
/// `predictor` column is added so several predictors share one table.
pub fn write_curves_csv<W: Write>(w: W, curves: &[RobustnessCurve], with_label: bool) -> Result<(), SweepError> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["kind", "degree", "mean_mm", "std_mm", "n"];
    if with_label {
        header.insert(0, "predictor");
    }
    out.write_record(&header)?;
    for c in curves {
        for p in &c.points {
            let mut row = vec![c.kind.to_string(), p.degree.to_string(), p.mean_mm.to_string(), p.std_mm.to_string(), p.n.to_string()];
            if with_label {
                row.insert(0, c.label.clone());
            }
            out.write_record(&row)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `predictor,<kind>,…` with one row per predictor.
pub fn write_matrix_csv<W: Write>(w: W, m: &TrainTestMatrix) -> Result<(), SweepError> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["predictor".to_string()];
    header.extend(m.columns.iter().map(ToString::to_string));
    out.write_record(&header)?;
    for (label, row) in m.rows.iter().zip(&m.cells) {
        let mut rec = vec![label.clone()];
        rec.extend(row.iter().map(ToString::to_string));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// A labelled table of per-group errors, e.g. one row per method with one
/// column per action plus an average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl ResultTable {
    /// `(column, value)` pairs of the row named `label`.
    pub fn row(&self, label: &str) -> Option<Vec<(String, f64)>> {
        self.rows
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, v)| self.columns.iter().cloned().zip(v.iter().copied()).collect())
    }
}

/// Reads a CSV whose first column labels rows and whose other columns are
/// numbers.
pub fn read_result_table<R: Read>(r: R) -> Result<ResultTable, SweepError> {
    let mut rdr = csv::Reader::from_reader(r);
    let columns: Vec<String> = rdr.headers()?.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let label = rec.get(0).unwrap_or_default().trim().to_string();
        let values = rec
            .iter()
            .skip(1)
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| SweepError::InvalidConfig(format!("row {label:?}: value {s:?}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != columns.len() {
            return Err(SweepError::InvalidConfig(format!("row {label:?} has {} values for {} columns", values.len(), columns.len())));
        }
        rows.push((label, values));
    }
    Ok(ResultTable { columns, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub group: String,
    pub baseline_mm: f64,
    pub candidate_mm: f64,
    /// `baseline − candidate`; positive when the candidate is better.
    pub improvement_mm: f64,
    /// Improvement relative to the baseline, percent.
    pub improvement_pct: f64,
}

impl ComparisonRow {
    /// Improvement as printed in reports: millimetres and percent, two decimals.
    pub fn improvement_text(&self) -> String {
        format!("{:.2} mm ({:.2}%)", self.improvement_mm, self.improvement_pct)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: String,
    pub candidate: String,
    pub rows: Vec<ComparisonRow>,
}

/// Absolute and relative improvement for every group present in both sets,
/// in baseline order.
pub fn compare(
    baseline_label: &str,
    baseline: &[(String, f64)],
    candidate_label: &str,
    candidate: &[(String, f64)],
) -> Result<Comparison, SweepError> {
    let rows: Vec<ComparisonRow> = baseline
        .iter()
        .filter_map(|(g, b)| {
            candidate.iter().find(|(h, _)| h == g).map(|&(_, c)| ComparisonRow {
                group: g.clone(),
                baseline_mm: *b,
                candidate_mm: c,
                improvement_mm: b - c,
                improvement_pct: if *b != 0.0 { 100.0 * (b - c) / b } else { 0.0 },
            })
        })
        .collect();
    if rows.is_empty() {
        return Err(SweepError::InvalidConfig("the two result sets share no groups".into()));
    }
    Ok(Comparison { baseline: baseline_label.into(), candidate: candidate_label.into(), rows })
}

/// `group,baseline_mm,candidate_mm,improvement_mm,improvement_pct`, with the
/// improvements rounded to two decimals.
pub fn write_comparison_csv<W: Write>(w: W, c: &Comparison) -> Result<(), SweepError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["group", "baseline_mm", "candidate_mm", "improvement_mm", "improvement_pct"])?;
    for r in &c.rows {
        out.write_record([
            r.group.clone(),
            r.baseline_mm.to_string(),
            r.candidate_mm.to_string(),
            format!("{:.2}", r.improvement_mm),
            format!("{:.2}", r.improvement_pct),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Hex SHA-256 of a value's JSON form.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_vec(config).expect("config serializes");
    Sha256::digest(json).iter().map(|b| format!("{b:02x}")).collect()
}

/// Provenance written next to every run's outputs. The timestamp is the only
/// field that differs between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub include_root: bool,
    pub std_convention: String,
    /// Excluded frame count per predictor label.
    pub excluded_frames: BTreeMap<String, usize>,
    pub version: String,
    pub created_unix_s: Option<u64>,
}

impl RunMetadata {
    pub fn new<T: Serialize>(command: &str, seed: u64, config: &T, include_root: bool) -> Self {
        Self {
            command: command.into(),
            seed,
            config_hash: config_hash(config),
            include_root,
            std_convention: "population".into(),
            excluded_frames: BTreeMap::new(),
            version: env!("CARGO_PKG_VERSION").into(),
            created_unix_s: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .ok()
                .map(|d| d.as_secs()),
        }
    }
}
