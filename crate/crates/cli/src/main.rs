use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value as Json};
use toml::{Table, Value};

use eqdisc::bench::{
    load_records, load_trajectory, merge, run_benchmark, save_trajectory, sindy_from_table, write_summary, BenchConfig,
    BenchError, MethodId, RunOptions,
};
use eqdisc::dynsys::{builtin_spec, SystemId};
use eqdisc::exec::Exec;
use eqdisc::expr::Expr;
use eqdisc::gpsr::{self, GpConfig};
use eqdisc::odeint::{add_noise, finite_difference, integrate, DEFAULT_ATOL, DEFAULT_RTOL};
use eqdisc::sindy;

/// Equation discovery for dynamical systems.
#[derive(Parser)]
#[command(name = "eqdisc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a built-in system and write its trajectory CSV and
    /// finite-difference derivatives (`<out>.deriv.csv`).
    Simulate {
        /// System id: lorenz, pendulum, lotka_volterra, sis, sir, seir, seird, sirv, sirs.
        #[arg(long)]
        system: String,
        /// Standard deviation of Gaussian noise added to the states.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Noise seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover governing equations from a trajectory CSV.
    Discover {
        /// sindy, sindy.stlsq, sindy.sr3, sindy.omp or gpsr.
        #[arg(long)]
        method: String,
        /// Trajectory CSV with a `t` column; derivatives are read from the
        /// `.deriv.csv` companion or estimated by finite differences.
        #[arg(long)]
        data: PathBuf,
        /// TOML hyperparameters for the method.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed for genetic programming (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// JSON file receiving the equations and diagnostics.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the benchmark matrix described by a TOML file.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        /// Recompute cells whose record already exists.
        #[arg(long)]
        force: bool,
        /// Run cells one at a time.
        #[arg(long)]
        sequential: bool,
        /// Suppress the per-cell log lines.
        #[arg(long)]
        quiet: bool,
    },
    /// Re-render the summary artifacts from existing records.
    Report {
        /// Directory of `*.json` records.
        #[arg(long)]
        records: PathBuf,
        /// Destination directory (default: the parent of the records directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum CliError {
    Usage(String),
    Domain(String),
}

fn usage(e: impl Display) -> CliError {
    CliError::Usage(e.to_string().trim_end().replace('\n', " "))
}

fn domain(e: impl Display) -> CliError {
    CliError::Domain(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            system,
            noise,
            seed,
            out,
        } => simulate(&system, noise, seed, &out),
        Command::Discover {
            method,
            data,
            config,
            seed,
            out,
        } => discover(&method, &data, config.as_deref(), seed, out.as_deref()),
        Command::Benchmark {
            config,
            force,
            sequential,
            quiet,
        } => benchmark(&config, force, sequential, quiet),
        Command::Report { records, out } => report(&records, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Domain(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn simulate(system: &str, noise: f64, seed: u64, out: &Path) -> Result<(), CliError> {
    let id: SystemId = system.parse().map_err(domain)?;
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(usage("--noise must be a non-negative number"));
    }
    let clean = integrate(&builtin_spec(id), DEFAULT_RTOL, DEFAULT_ATOL).map_err(domain)?;
    let traj = finite_difference(&add_noise(&clean, noise, seed)).map_err(domain)?;
    save_trajectory(&traj, out).map_err(domain)?;
    println!(
        "wrote {} ({} samples of {})",
        out.display(),
        traj.len(),
        traj.variables.join(", ")
    );
    Ok(())
}

fn read_config(path: Option<&Path>) -> Result<Table, CliError> {
    let Some(path) = path else {
        return Ok(Table::new());
    };
    let text = std::fs::read_to_string(path).map_err(|e| domain(format!("{}: {e}", path.display())))?;
    text.parse::<Table>()
        .map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Fills library and threshold defaults for sparse regression. The sparsity
/// level of OMP has no sensible default and must be given.
fn sindy_defaults(m: MethodId, mut t: Table) -> Table {
    t.entry("library")
        .or_insert_with(|| toml::toml! { generators = [{ kind = "polynomial", degree = 2 }] }.into());
    let opt = t.entry("optimizer").or_insert_with(|| Value::Table(Table::new()));
    if let Value::Table(opt) = opt {
        let kind = opt
            .get("kind")
            .and_then(Value::as_str)
            .or(m.fixed_optimizer())
            .unwrap_or("stlsq")
            .to_string();
        match kind.as_str() {
            "stlsq" => {
                opt.entry("threshold").or_insert(Value::Float(0.1));
                opt.entry("alpha").or_insert(Value::Float(0.05));
            }
            "sr3" => {
                opt.entry("threshold").or_insert(Value::Float(0.1));
            }
            _ => {}
        }
        opt.entry("kind").or_insert(Value::String(kind));
    }
    t
}

fn equation_line(name: &str, e: &Expr, names: &[String]) -> String {
    format!("d{name}/dt = {}", e.round_constants(4).to_text(names))
}

fn discover(
    method: &str,
    data: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let m: MethodId = method.parse().map_err(usage)?;
    let table = read_config(config)?;
    let sindy_cfg = if m.is_sindy() {
        Some(sindy_from_table(m, sindy_defaults(m, table.clone())).map_err(|e| usage(format!("{m}: {e}")))?)
    } else {
        None
    };
    let mut traj = load_trajectory(data).map_err(domain)?;
    if traj.derivatives.is_none() {
        traj = finite_difference(&traj).map_err(domain)?;
    }
    traj.validate()
        .map_err(|e| domain(format!("{}: {e}", data.display())))?;
    let names = traj.variables.clone();

    let (exprs, details) = if let Some(cfg) = sindy_cfg {
        let model = sindy::fit(&traj, &cfg, Exec::default()).map_err(domain)?;
        let t = model.table();
        let details = json!({
            "config": cfg,
            "terms": t.rows.iter().map(|r| r.term.clone()).collect::<Vec<_>>(),
            "coefficients": (0..names.len())
                .map(|j| t.rows.iter().map(|r| r.coefficients[j]).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
            "diagnostics": model.diagnostics,
        });
        (model.expressions(0.0), details)
    } else {
        let cfgs = gp_configs(table, &names, seed)?;
        let model = gpsr::discover_with(&traj, |j| cfgs[j].clone(), Exec::default()).map_err(domain)?;
        let mut per = Vec::new();
        for (j, r) in model.results.iter().enumerate() {
            println!("Pareto front for d{}/dt:", names[j]);
            print!("{}", r.front.to_table(&names));
            println!();
            per.push(json!({
                "variable": names[j],
                "loss": r.best_loss,
                "seed": cfgs[j].seed,
                "front": r.front.entries().map(|e| json!({
                    "complexity": e.complexity(),
                    "loss": e.loss,
                    "expression": e.expr.to_text(&names),
                })).collect::<Vec<_>>(),
            }));
        }
        println!("Best:");
        (model.expressions(), Json::Array(per))
    };

    for (name, e) in names.iter().zip(&exprs) {
        println!("{}", equation_line(name, e, &names));
    }
    if let Some(out) = out {
        let doc = json!({
            "method": m.name(),
            "data": data.display().to_string(),
            "variables": names,
            "equations": names.iter().zip(&exprs).map(|(n, e)| json!({
                "variable": n,
                "expression": e.to_text(&names),
                "complexity": e.complexity(),
            })).collect::<Vec<_>>(),
            "details": details,
        });
        let text = serde_json::to_string_pretty(&doc).map_err(domain)? + "\n";
        std::fs::write(out, text).map_err(|e| domain(format!("{}: {e}", out.display())))?;
    }
    Ok(())
}

/// Per-variable GP settings: the top-level table with `[variables.<name>]`
/// overrides merged in.
fn gp_configs(mut table: Table, names: &[String], seed: Option<u64>) -> Result<Vec<GpConfig>, CliError> {
    let overrides = match table.remove("variables") {
        None => Table::new(),
        Some(Value::Table(t)) => t,
        Some(_) => return Err(usage("`variables` must be a table")),
    };
    if let Some(unknown) = overrides.keys().find(|k| !names.contains(k)) {
        return Err(usage(format!("`variables.{unknown}` names no column of the data")));
    }
    names
        .iter()
        .map(|name| {
            let mut t = table.clone();
            if let Some(Value::Table(o)) = overrides.get(name) {
                merge(&mut t, o);
            }
            let mut cfg: GpConfig = Value::Table(t).try_into().map_err(|e| usage(format!("gpsr: {e}")))?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate().map_err(|e| usage(format!("gpsr: {e}")))?;
            Ok(cfg)
        })
        .collect()
}

fn bench_error(e: BenchError) -> CliError {
    match e {
        BenchError::Config(_)
        | BenchError::UnknownMethod { .. }
        | BenchError::Method { .. }
        | BenchError::System(_) => usage(e),
        e => domain(e),
    }
}

fn benchmark(config: &Path, force: bool, sequential: bool, quiet: bool) -> Result<(), CliError> {
    let cfg = BenchConfig::load(config).map_err(bench_error)?;
    let opts = RunOptions {
        force,
        exec: if sequential { Exec::Sequential } else { Exec::Parallel },
        verbose: !quiet,
    };
    let outcome = run_benchmark(&cfg, opts).map_err(domain)?;
    println!(
        "{} cells: {} run, {} already present; results in {}",
        outcome.records.len(),
        outcome.ran,
        outcome.skipped,
        cfg.output_dir.display()
    );
    print_grid(&cfg.output_dir.join("summary.md"));
    Ok(())
}

fn print_grid(summary: &Path) {
    if let Ok(text) = std::fs::read_to_string(summary) {
        for line in text
            .lines()
            .skip_while(|l| !l.starts_with('|'))
            .take_while(|l| l.starts_with('|'))
        {
            println!("{line}");
        }
    }
}

fn report(records: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let list = load_records(records).map_err(domain)?;
    let out = match out {
        Some(o) => o.to_path_buf(),
        None => match records.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        },
    };
    std::fs::create_dir_all(&out).map_err(|e| domain(format!("{}: {e}", out.display())))?;
    write_summary(&out, &list).map_err(domain)?;
    println!(
        "{} records summarized in {}",
        list.len(),
        out.join("summary.md").display()
    );
    print_grid(&out.join("summary.md"));
    Ok(())
}
