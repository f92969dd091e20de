//! Deterministic CSV and JSON artifact writers.
//!
//! All numeric output uses the shortest round-trip decimal representation
//! (Rust's default `f64` display), so reruns with the same config and seed
//! produce byte-identical files. JSON reports follow a fixed schema:
//! `{ stage, inputs, constants, exponents, pass }` with sorted keys.

use serde::Serialize;
use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::Path;

/// Top-level JSON report for one experiment run.
#[derive(Clone, Debug, Serialize)]
pub struct JsonReport {
    /// Experiment kind, or the pipeline stage that aborted.
    pub stage: String,
    /// Resolved input settings, stringified.
    pub inputs: BTreeMap<String, String>,
    /// Measured constants (ratios, errors, bounds).
    pub constants: BTreeMap<String, f64>,
    /// Fitted exponents.
    pub exponents: BTreeMap<String, f64>,
    pub pass: bool,
}

impl JsonReport {
    pub fn new(stage: &str) -> JsonReport {
        JsonReport {
            stage: stage.into(),
            inputs: BTreeMap::new(),
            constants: BTreeMap::new(),
            exponents: BTreeMap::new(),
            pass: false,
        }
    }

    pub fn input(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.inputs.insert(key.into(), value.to_string());
        self
    }

    pub fn constant(&mut self, key: &str, value: f64) -> &mut Self {
        self.constants.insert(key.into(), value);
        self
    }

    pub fn exponent(&mut self, key: &str, value: f64) -> &mut Self {
        self.exponents.insert(key.into(), value);
        self
    }
}

fn ensure_parent(path: &Path) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(())
}

/// Write the JSON report (pretty-printed, trailing newline). Non-finite
/// numbers are rejected rather than silently serialized as nulls.
pub fn write_json(path: &Path, report: &JsonReport) -> io::Result<()> {
    for (k, v) in report.constants.iter().chain(report.exponents.iter()) {
        if !v.is_finite() {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("non-finite value for `{k}`: {v}"),
            ));
        }
    }
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    text.push('\n');
    std::fs::write(path, text)
}

/// Shortest round-trip decimal for a float cell.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// Write a CSV file with a mandatory header row. Rows are arbitrary
/// pre-formatted cells; use [`num`] for floats.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
    ensure_parent(path)?;
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        if row.len() != header.len() {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("row width {} does not match header width {}", row.len(), header.len()),
            ));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)
}

/// Write a CSV of float columns.
pub fn write_csv_nums(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> io::Result<()> {
    let formatted: Vec<Vec<String>> = rows
        .iter()
        .map(|r| r.iter().map(|&x| num(x)).collect())
        .collect();
    write_csv(path, header, &formatted)
}

/// Append one line to standard output and flush; the single writer for
/// run-progress messages.
pub fn progress(msg: &str) {
    let mut out = io::stdout().lock();
    let _ = writeln!(out, "{msg}");
    let _ = out.flush();
}
