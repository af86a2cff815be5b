//! Atomic CSV and JSON writers.
//!
//! Floats use Rust's shortest round-trip formatting, so every value parses
//! back to the identical bit pattern.

use std::io::Write;
use std::path::{Path, PathBuf};

use moldctl_core::tune::TraceEntry;
use moldctl_core::Row;
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::error::CliError;

pub const TRAJECTORY_HEADER: [&str; 11] = [
    "t",
    "x1",
    "x2",
    "x3",
    "x4",
    "x5",
    "yd",
    "e",
    "u",
    "v",
    "saturated",
];
pub const TRACE_HEADER: [&str; 7] = ["eval", "k1", "k2", "k3", "k4", "cost", "best_so_far"];

/// Writes `bytes` to `dir/name` through a temporary file in the same directory.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(&path, e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| CliError::io(&path, e))?;
    tmp.persist(&path)
        .map_err(|e| CliError::io(&path, e.error))?;
    Ok(path)
}

pub fn trajectory_csv(rows: &[Row]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRAJECTORY_HEADER)?;
    for r in rows {
        let mut rec: Vec<String> = Vec::with_capacity(11);
        rec.push(r.t.to_string());
        rec.extend(r.x.iter().map(f64::to_string));
        rec.extend([r.yd, r.e, r.u, r.v].iter().map(f64::to_string));
        rec.push(u8::from(r.saturated).to_string());
        w.write_record(&rec)?;
    }
    finish(w)
}

pub fn trace_csv(trace: &[TraceEntry]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER)?;
    for t in trace {
        let mut rec = vec![t.eval.to_string()];
        rec.extend(t.gains.iter().map(f64::to_string));
        rec.push(t.cost.to_string());
        rec.push(t.best_so_far.to_string());
        w.write_record(&rec)?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>, CliError> {
    w.into_inner()
        .map_err(|e| CliError::io("<csv buffer>", e.into_error()))
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}
