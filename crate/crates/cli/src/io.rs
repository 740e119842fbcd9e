//! File formats: signal CSV in, trajectory CSV and JSON out.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use stl_gmsr::scp::Trajectory;
use stl_gmsr::Signal;

use crate::Failure;

/// Reads a signal CSV with header `t,x1,...,xn`. Row `i` (1-based) holds
/// step `i`, and its `t` column must equal `i`.
pub fn read_signal(path: &Path) -> Result<Signal, Failure> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Failure::usage(format!("cannot read signal {}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?
        .clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let dim = names.len().saturating_sub(1);
    let expected: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=dim).map(|i| format!("x{i}")))
        .collect();
    if dim == 0 || names != expected {
        return Err(Failure::usage(format!(
            "{}: header must be `t,x1,...,xn`, got `{}`",
            path.display(),
            names.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        let values = record
            .iter()
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Failure::usage(format!("{} line {line}: {e}", path.display())))?;
        if values[0] != (i + 1) as f64 {
            return Err(Failure::usage(format!(
                "{} line {line}: step column is {}, expected {}",
                path.display(),
                values[0],
                i + 1
            )));
        }
        rows.push(values[1..].to_vec());
    }
    Ok(Signal::from_rows(&rows)?)
}

/// Writes one row per node: `t, x1..xn, u1..um`.
pub fn write_trajectory(path: &Path, times: &[f64], z: &Trajectory) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_error(path, e))?;
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=z.nx).map(|i| format!("x{i}")))
        .chain((1..=z.nu).map(|i| format!("u{i}")))
        .collect();
    w.write_record(&header).map_err(|e| write_error(path, e))?;
    for (k, t) in (1..=z.nodes).zip(times) {
        let row: Vec<String> = std::iter::once(*t)
            .chain(z.x(k).iter().copied())
            .chain(z.u(k).iter().copied())
            .map(|v| v.to_string())
            .collect();
        w.write_record(&row).map_err(|e| write_error(path, e))?;
    }
    w.flush().map_err(|e| write_error(path, e))
}

pub fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_error(path, e))?;
    w.write_record(header).map_err(|e| write_error(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| write_error(path, e))?;
    }
    w.flush().map_err(|e| write_error(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| write_error(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| write_error(path, e))
}

/// Prints `value` as one JSON line on stdout.
pub fn print_line<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("output values serialize"));
}

/// Creates the output directory, defaulting to the current directory.
pub fn outdir(dir: Option<PathBuf>) -> Result<PathBuf, Failure> {
    let dir = dir.unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| Failure::usage(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_error(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::usage(format!("cannot write {}: {e}", path.display()))
}
