//! CSV and JSON artifacts. Output is byte-stable for identical inputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::covering::BoundReport;
use crate::error::Result;
use crate::harness::simulate::RunRecord;
use crate::rates::SeriesRow;

pub const RUNS_HEADER: [&str; 6] = ["n", "rep", "seed", "method", "mse", "failed"];

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(File::create(path)?)))
}

/// `runs.csv`; an empty slice yields a header-only file.
pub fn write_runs_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(RUNS_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_runs_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in rd.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

/// Figure series as `gamma, series_name, value`.
pub fn write_series_csv(rows: &[SeriesRow], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["gamma", "series_name", "value"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub formula: String,
    pub delta: f64,
    pub gamma: Option<usize>,
    pub value: f64,
    pub terms: Vec<f64>,
}

impl BoundRow {
    pub fn from_report(delta: f64, r: &BoundReport) -> Self {
        BoundRow {
            formula: format!("{:?}", r.formula),
            delta,
            gamma: r.minimizing_gamma,
            value: r.value,
            terms: r.terms.iter().map(|t| t.value).collect(),
        }
    }
}

/// Bound table with columns `formula, delta, gamma, value, term_1..term_k`,
/// where `k` is the largest term count; shorter rows are padded with empty cells.
pub fn write_bounds_csv(rows: &[BoundRow], path: &Path) -> Result<()> {
    let width = rows.iter().map(|r| r.terms.len()).max().unwrap_or(0);
    let mut w = writer(path)?;
    let mut header: Vec<String> = ["formula", "delta", "gamma", "value"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=width).map(|i| format!("term_{i}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec =
            vec![r.formula.clone(), r.delta.to_string(), r.gamma.map(|g| g.to_string()).unwrap_or_default(), r.value.to_string()];
        rec.extend((0..width).map(|i| r.terms.get(i).map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryRow {
    pub n: usize,
    pub mean_mse: f64,
    pub critical_r2: f64,
    pub kernel_r2: f64,
    pub standard_r2: f64,
}

pub fn write_theory_csv(rows: &[TheoryRow], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["n", "mean_mse", "critical_r2", "kernel_r2", "standard_r2"])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
