//! Trajectory CSV files: header `t,<var1>,...,<varn>`, one row per sample.
//! Derivatives live in a companion `<name>.deriv.csv` with the same layout.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::odeint::{Provenance, Trajectory};

#[derive(Debug, Error)]
pub enum TrajectoryIoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: bad header: {reason}")]
    Header { path: PathBuf, reason: String },
    #[error("{path}: line {line} has {found} fields, expected {expected}")]
    Ragged {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}: line {line}, column `{column}`: cannot parse `{text}` as a number")]
    Number {
        path: PathBuf,
        line: usize,
        column: String,
        text: String,
    },
    #[error("{path}: time does not increase at line {line}")]
    NonMonotone { path: PathBuf, line: usize },
    #[error("{path}: no data rows")]
    Empty { path: PathBuf },
    #[error("{path}: derivative file does not match the state file: {reason}")]
    Companion { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

/// Path of the derivative companion of a trajectory file.
pub fn derivative_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.deriv.csv"))
}

/// Shortest text that parses back to the same value, in positional
/// notation where that stays compact.
pub fn format_float(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn write_table(path: &Path, names: &[String], times: &[f64], rows: &[Vec<f64>]) -> Result<(), TrajectoryIoError> {
    let csv_err = |source| TrajectoryIoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let header: Vec<&str> = std::iter::once("t").chain(names.iter().map(String::as_str)).collect();
    w.write_record(&header).map_err(csv_err)?;
    for (t, row) in times.iter().zip(rows) {
        let fields: Vec<String> = std::iter::once(*t)
            .chain(row.iter().copied())
            .map(format_float)
            .collect();
        w.write_record(&fields).map_err(csv_err)?;
    }
    w.flush().map_err(|source| TrajectoryIoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes the states and, when present, the derivative companion file.
pub fn save_trajectory(traj: &Trajectory, path: &Path) -> Result<(), TrajectoryIoError> {
    write_table(path, &traj.variables, &traj.times, &traj.states)?;
    if let Some(d) = &traj.derivatives {
        write_table(&derivative_path(path), &traj.variables, &traj.times, d)?;
    }
    Ok(())
}

struct Table {
    names: Vec<String>,
    times: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

fn read_table(path: &Path) -> Result<Table, TrajectoryIoError> {
    let p = || path.to_path_buf();
    let text = fs::read_to_string(path).map_err(|source| TrajectoryIoError::Io { path: p(), source })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|source| TrajectoryIoError::Csv { path: p(), source })?
        .clone();
    let cols: Vec<String> = header.iter().map(str::to_string).collect();
    if cols.first().map(String::as_str) != Some("t") {
        return Err(TrajectoryIoError::Header {
            path: p(),
            reason: "first column must be `t`".into(),
        });
    }
    let names = cols[1..].to_vec();
    if names.is_empty() {
        return Err(TrajectoryIoError::Header {
            path: p(),
            reason: "no variable columns".into(),
        });
    }
    if let Some(bad) = names.iter().find(|n| n.is_empty() || n.as_str() == "t") {
        return Err(TrajectoryIoError::Header {
            path: p(),
            reason: format!("invalid variable name `{bad}`"),
        });
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
        return Err(TrajectoryIoError::Header {
            path: p(),
            reason: format!("duplicate column `{dup}`"),
        });
    }
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|source| TrajectoryIoError::Csv { path: p(), source })?;
        if rec.len() != cols.len() {
            return Err(TrajectoryIoError::Ragged {
                path: p(),
                line,
                expected: cols.len(),
                found: rec.len(),
            });
        }
        let mut values = Vec::with_capacity(rec.len());
        for (field, column) in rec.iter().zip(&cols) {
            let v: f64 = field.parse().map_err(|_| TrajectoryIoError::Number {
                path: p(),
                line,
                column: column.clone(),
                text: field.to_string(),
            })?;
            values.push(v);
        }
        let t = values[0];
        if times.last().is_some_and(|&prev: &f64| !(t > prev)) {
            return Err(TrajectoryIoError::NonMonotone { path: p(), line });
        }
        times.push(t);
        rows.push(values[1..].to_vec());
    }
    if times.is_empty() {
        return Err(TrajectoryIoError::Empty { path: p() });
    }
    Ok(Table { names, times, rows })
}

/// Reads a trajectory and its derivative companion, if one exists.
pub fn load_trajectory(path: &Path) -> Result<Trajectory, TrajectoryIoError> {
    let states = read_table(path)?;
    let dpath = derivative_path(path);
    let derivatives = if dpath.exists() {
        let d = read_table(&dpath)?;
        let reason = if d.names != states.names {
            Some(format!("columns {:?} vs {:?}", d.names, states.names))
        } else if d.times != states.times {
            Some("time columns differ".to_string())
        } else {
            None
        };
        if let Some(reason) = reason {
            return Err(TrajectoryIoError::Companion { path: dpath, reason });
        }
        Some(d.rows)
    } else {
        None
    };
    Ok(Trajectory {
        times: states.times,
        states: states.rows,
        derivatives,
        variables: states.names,
        provenance: Provenance::default(),
    })
}
