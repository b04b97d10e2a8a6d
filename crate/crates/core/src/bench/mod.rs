//! Experiment matrix: every (system, method, seed) cell is simulated,
//! regressed, checked against the ground-truth equations and compared
//! trajectory-wise, then rendered as summary artifacts.
//!
//! Output tree under the configured directory:
//! `records/*.json`, `timings.csv`, `summary.{md,csv}`, `metrics.svg`,
//! `trajectories/*.csv`.

mod config;
mod io;
mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynsys::{builtin_spec, SystemError, SystemId};
use crate::exec::Exec;
use crate::expr::{structural_match, Expr, MatchVerdict};
use crate::gpsr;
use crate::odeint::{add_noise, finite_difference, integrate, Trajectory, DEFAULT_ATOL, DEFAULT_RTOL};
use crate::sindy;
use crate::stats::{trajectory_compare, MetricReport};

pub use config::{merge, sindy_from_table, BenchConfig, MethodBlock, MethodId};
pub use io::{derivative_path, format_float, load_trajectory, save_trajectory, TrajectoryIoError};
pub use report::{render_cell, render_summary, Summary};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown method `{name}` (valid: {valid})")]
    UnknownMethod { name: String, valid: String },
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("{method} on {system}: {message}")]
    Method {
        method: MethodId,
        system: String,
        message: String,
    },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("no records found in {0}")]
    NoRecords(PathBuf),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> BenchError {
    BenchError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// One cell of the matrix. Wall-clock time is kept out of the record so
/// reruns are byte-identical; it goes to `timings.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub system: SystemId,
    pub method: MethodId,
    pub seed: u64,
    pub variables: Vec<String>,
    pub truth: Vec<String>,
    pub recovered: Vec<String>,
    pub verdicts: Vec<MatchVerdict>,
    /// Every variable's form identified.
    pub checkmark: bool,
    pub metrics: Option<MetricReport>,
    pub error: Option<String>,
}

impl BenchmarkRecord {
    pub fn file_name(system: SystemId, method: MethodId, seed: u64) -> String {
        format!("{}__{}__{}.json", system.name(), method.name(), seed)
    }

    pub fn diverged(&self) -> bool {
        self.metrics.as_ref().is_some_and(MetricReport::is_diverged)
    }

    /// Recovered and statistically indistinguishable from the truth.
    pub fn no_significant_difference(&self) -> bool {
        self.metrics
            .as_ref()
            .is_some_and(MetricReport::no_significant_difference)
    }

    fn sort_key(&self) -> (usize, usize, u64) {
        let s = SystemId::ALL
            .iter()
            .position(|x| *x == self.system)
            .unwrap_or(usize::MAX);
        let m = MethodId::ALL
            .iter()
            .position(|x| *x == self.method)
            .unwrap_or(usize::MAX);
        (s, m, self.seed)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("records serialize");
        s.push('\n');
        s
    }
}

pub fn sort_records(records: &mut [BenchmarkRecord]) {
    records.sort_by_key(BenchmarkRecord::sort_key);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Recompute cells whose record already exists.
    pub force: bool,
    pub exec: Exec,
    /// Print one line per finished cell to stderr.
    pub verbose: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub records: Vec<BenchmarkRecord>,
    pub ran: usize,
    pub skipped: usize,
}

/// Fits one method to training data and returns one expression per variable.
pub fn discover_equations(
    cfg: &BenchConfig,
    method: MethodId,
    system: SystemId,
    seed: u64,
    train: &Trajectory,
    exec: Exec,
) -> Result<Vec<Expr>, String> {
    if method.is_sindy() {
        let scfg = cfg.sindy_config(method, system).map_err(|e| e.to_string())?;
        let model = sindy::fit(train, &scfg, exec).map_err(|e| e.to_string())?;
        Ok(model.expressions(0.0))
    } else {
        let cfgs: Vec<gpsr::GpConfig> = (0..train.dim())
            .map(|j| cfg.gp_config(system, j, seed))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let model = gpsr::discover_with(train, |j| cfgs[j].clone(), exec).map_err(|e| e.to_string())?;
        Ok(model.expressions())
    }
}

fn run_cell(
    cfg: &BenchConfig,
    system: SystemId,
    method: MethodId,
    seed: u64,
    clean: &Trajectory,
    exec: Exec,
) -> BenchmarkRecord {
    let spec = builtin_spec(system);
    let mut record = BenchmarkRecord {
        system,
        method,
        seed,
        variables: spec.variables.clone(),
        truth: spec.equations.iter().map(|e| e.to_text(&spec.variables)).collect(),
        recovered: Vec::new(),
        verdicts: Vec::new(),
        checkmark: false,
        metrics: None,
        error: None,
    };
    let train = if cfg.noise > 0.0 {
        finite_difference(&add_noise(clean, cfg.noise, seed)).map_err(|e| e.to_string())
    } else {
        Ok(clean.clone())
    };
    let found = train.and_then(|t| discover_equations(cfg, method, system, seed, &t, exec));
    let exprs = match found {
        Ok(e) => e,
        Err(e) => {
            record.error = Some(e);
            return record;
        }
    };
    record.recovered = exprs.iter().map(|e| e.to_text(&spec.variables)).collect();
    record.verdicts = exprs
        .iter()
        .zip(&spec.equations)
        .map(|(e, t)| structural_match(e, t, cfg.match_rtol))
        .collect();
    record.checkmark = record.verdicts.iter().all(|v| v.is_recovered());
    match trajectory_compare(&spec, &exprs, DEFAULT_RTOL, DEFAULT_ATOL, cfg.test_points) {
        Ok(m) => record.metrics = Some(m),
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

fn write_file(path: &Path, contents: &str) -> Result<(), BenchError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

/// Runs every missing cell (or all with `force`), then writes the
/// timings, the summary artifacts and the ground-truth trajectories.
pub fn run_benchmark(cfg: &BenchConfig, opts: RunOptions) -> Result<RunOutcome, BenchError> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    let records_dir = out.join("records");
    let traj_dir = out.join("trajectories");
    for d in [&records_dir, &traj_dir] {
        fs::create_dir_all(d).map_err(|e| io_err(d, e))?;
    }

    let mut cells = Vec::new();
    for &s in &cfg.systems {
        for &m in &cfg.methods {
            for &seed in &cfg.seeds {
                cells.push((s, m, seed));
            }
        }
    }
    let todo: Vec<(SystemId, MethodId, u64)> = cells
        .iter()
        .copied()
        .filter(|&(s, m, seed)| opts.force || !records_dir.join(BenchmarkRecord::file_name(s, m, seed)).exists())
        .collect();

    let mut needed: Vec<SystemId> = todo.iter().map(|c| c.0).collect();
    needed.dedup();
    let data: Vec<Result<Trajectory, String>> = opts.exec.map(&needed, |&s| {
        let t = integrate(&builtin_spec(s), DEFAULT_RTOL, DEFAULT_ATOL).map_err(|e| e.to_string())?;
        finite_difference(&t).map_err(|e| e.to_string())
    });
    let mut clean = BTreeMap::new();
    for (s, d) in needed.iter().zip(data) {
        let t = d.map_err(|message| BenchError::Method {
            method: MethodId::Sindy,
            system: s.name().to_string(),
            message: format!("ground truth: {message}"),
        })?;
        let path = traj_dir.join(format!("{}.csv", s.name()));
        save_trajectory(&t, &path).map_err(|e| io_err(&path, e))?;
        clean.insert(*s, t);
    }

    let results: Vec<Result<f64, BenchError>> = opts.exec.with_workers(cfg.workers, || {
        opts.exec.map(&todo, |&(s, m, seed)| {
            let start = Instant::now();
            let record = run_cell(cfg, s, m, seed, &clean[&s], opts.exec);
            let secs = start.elapsed().as_secs_f64();
            let path = records_dir.join(BenchmarkRecord::file_name(s, m, seed));
            write_file(&path, &record.to_json())?;
            if opts.verbose {
                let status = match (&record.error, record.checkmark) {
                    (Some(e), _) => format!("error: {e}"),
                    (None, true) => "form recovered".to_string(),
                    (None, false) => "form not recovered".to_string(),
                };
                eprintln!(
                    "{:<15} {:<12} seed {:<4} {:>8.2}s  {status}",
                    s.name(),
                    m.name(),
                    seed,
                    secs
                );
            }
            Ok(secs)
        })
    });
    let mut timings = read_timings(&out.join("timings.csv"));
    for (&(s, m, seed), r) in todo.iter().zip(results) {
        timings.insert((s.name().to_string(), m.name().to_string(), seed), r?);
    }
    write_timings(&out.join("timings.csv"), &timings)?;

    let mut records = Vec::with_capacity(cells.len());
    for &(s, m, seed) in &cells {
        records.push(read_record(&records_dir.join(BenchmarkRecord::file_name(s, m, seed)))?);
    }
    sort_records(&mut records);
    write_summary(out, &records)?;
    Ok(RunOutcome {
        records,
        ran: todo.len(),
        skipped: cells.len() - todo.len(),
    })
}

pub fn read_record(path: &Path) -> Result<BenchmarkRecord, BenchError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

/// Every `*.json` record in `dir`, in matrix order.
pub fn load_records(dir: &Path) -> Result<Vec<BenchmarkRecord>, BenchError> {
    let entries = fs::read_dir(dir).map_err(|e| io_err(dir, e))?;
    let mut records = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            records.push(read_record(&path)?);
        }
    }
    if records.is_empty() {
        return Err(BenchError::NoRecords(dir.to_path_buf()));
    }
    sort_records(&mut records);
    Ok(records)
}

/// Writes `summary.md`, `summary.csv` and `metrics.svg` into `out`.
pub fn write_summary(out: &Path, records: &[BenchmarkRecord]) -> Result<(), BenchError> {
    let s = render_summary(records);
    write_file(&out.join("summary.md"), &s.markdown)?;
    write_file(&out.join("summary.csv"), &s.csv)?;
    write_file(&out.join("metrics.svg"), &s.svg)
}

type TimingKey = (String, String, u64);

fn read_timings(path: &Path) -> BTreeMap<TimingKey, f64> {
    let mut map = BTreeMap::new();
    if let Ok(mut r) = csv::Reader::from_path(path) {
        for row in r.deserialize::<(String, String, u64, f64)>().flatten() {
            map.insert((row.0, row.1, row.2), row.3);
        }
    }
    map
}

fn write_timings(path: &Path, timings: &BTreeMap<TimingKey, f64>) -> Result<(), BenchError> {
    let mut text = String::from("system,method,seed,seconds\n");
    for ((s, m, seed), secs) in timings {
        text.push_str(&format!("{s},{m},{seed},{secs:.3}\n"));
    }
    write_file(path, &text)
}
