//! Command-line checker for convergence-rate certificates of
//! time-inhomogeneous Markovian multiserver queues.
//!
//! One TOML config (or a shipped preset) per run; a small set of flags
//! overrides the numerical budgets. Exit codes behave like a checker:
//! 0 when the requested certificate holds, 2 when it is inconclusive or
//! an oracle disagrees, 1 on any error. Every output file carries the
//! tool version and the hash of the effective config, and both the ODE
//! solver and the simulator are deterministic, so equal hashes imply
//! byte-identical outputs.

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use queuebounds_core::bounds::{aggregate, bounds_report, default_j_max, Verdict};
use queuebounds_core::config::RunConfig;
use queuebounds_core::dseq::DSequence;
use queuebounds_core::error::{Error, Result};
use queuebounds_core::kolmogorov::{limiting_regime, solve_at, unit_vector, LimitingCharacteristics};
use queuebounds_core::model::{ModelSpec, QueueClass};
use queuebounds_core::simulate::{compare_to_ode, simulate, SimConfig};

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "queuebounds", version, about = "Convergence-rate certificates for inhomogeneous Markovian queues")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct CommonOpts {
    /// TOML run configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Shipped preset, e.g. `case-i-50` or `case-iv-10`.
    #[arg(long)]
    preset: Option<String>,
    /// Override the initial truncation size N.
    #[arg(long)]
    n: Option<usize>,
    /// Override the mixing horizon t*.
    #[arg(long)]
    t_star: Option<f64>,
    /// Override the simulation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of simulated paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute the certificate: positivity, periodic constants, verdict.
    Bounds(CommonOpts),
    /// Approximate the limiting idle probability and mean on [t*, t*+1].
    Limits(CommonOpts),
    /// Run several queue classes with the shared (lambda, mu, S) and
    /// tabulate the gaps between their limiting characteristics.
    CompareClasses {
        #[command(flatten)]
        opts: CommonOpts,
        /// Comma-separated class labels, e.g. `i,ii,iii,iv`.
        #[arg(long, default_value = "i,ii,iii,iv")]
        classes: String,
    },
    /// Cross-check the Kolmogorov solution against Monte-Carlo thinning.
    Simulate(CommonOpts),
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Bounds(opts) => cmd_bounds(load_config(&opts)?),
        Cmd::Limits(opts) => cmd_limits(load_config(&opts)?),
        Cmd::CompareClasses { opts, classes } => {
            cmd_compare_classes(load_config(&opts)?, &classes)
        }
        Cmd::Simulate(opts) => cmd_simulate(load_config(&opts)?),
    }
}

/// Loads the config from `--config` or `--preset` and applies the flag
/// overrides; the hash of the result is what the outputs carry.
fn load_config(opts: &CommonOpts) -> Result<RunConfig> {
    let mut cfg = match (&opts.config, &opts.preset) {
        (Some(path), None) => RunConfig::load(path)?,
        (None, Some(name)) => RunConfig::preset(name)?,
        _ => return Err(Error::Usage("pass exactly one of --config or --preset".into())),
    };
    if let Some(n) = opts.n {
        cfg.truncation.n_initial = n;
        cfg.truncation.n_cap = cfg.truncation.n_cap.max(n);
    }
    if let Some(t) = opts.t_star {
        cfg.solver.t_star = t;
    }
    if let Some(s) = opts.seed {
        cfg.simulation.seed = s;
    }
    if let Some(p) = opts.paths {
        cfg.simulation.paths = p;
    }
    if let Some(out) = &opts.out {
        cfg.output.directory = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Wraps a command body in version and config-hash fields.
#[derive(Serialize)]
struct ReportDoc<T: Serialize> {
    tool_version: &'static str,
    config_hash: String,
    #[serde(flatten)]
    body: T,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, hash: &str, body: T) -> Result<()> {
    let doc = ReportDoc { tool_version: TOOL_VERSION, config_hash: hash.to_string(), body };
    let mut out = BufWriter::new(File::create(dir.join(name))?);
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    writeln!(out, "{text}")?;
    Ok(())
}

/// CSV with a comment header; all values at 17 significant digits so
/// regression diffs are exact.
fn write_csv(
    dir: &Path,
    name: &str,
    hash: &str,
    meta: &[String],
    columns: &str,
    rows: &[Vec<f64>],
) -> Result<()> {
    let mut out = BufWriter::new(File::create(dir.join(name))?);
    writeln!(out, "# queuebounds {TOOL_VERSION} config {hash}")?;
    for line in meta {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "{columns}")?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

fn prepare(cfg: &RunConfig) -> Result<(ModelSpec, DSequence, PathBuf, String)> {
    let d = cfg.resolve_dsequence()?;
    let dir = cfg.output.directory.clone();
    std::fs::create_dir_all(&dir)?;
    Ok((cfg.model.clone(), d, dir, cfg.hash()))
}

fn cmd_bounds(cfg: RunConfig) -> Result<ExitCode> {
    let (model, d, dir, hash) = prepare(&cfg)?;
    let n_check = cfg.truncation.n_initial.min(128);
    let report = bounds_report(&model, &d, n_check, 1e-9)?;
    write_json(&dir, "report.json", &hash, &report)?;
    let j_max = default_j_max(&model, &d);
    let rows: Vec<Vec<f64>> = (0..=200)
        .map(|j| {
            let t = j as f64 / 200.0;
            aggregate(&model, &d, t, j_max).map(|a| vec![t, a.alpha, a.beta, a.chi])
        })
        .collect::<Result<_>>()?;
    write_csv(&dir, "rates.csv", &hash, &[], "t,alpha,beta,chi", &rows)?;
    match report.verdict {
        Verdict::Inconclusive => {
            eprintln!(
                "inconclusive: positivity ok = {}, a = {:.6}, witness = {:?}",
                report.positivity.ok, report.periodic.a, report.positivity.witness
            );
            Ok(ExitCode::from(2))
        }
        _ => Ok(ExitCode::SUCCESS),
    }
}

fn limits_meta(lr: &LimitingCharacteristics) -> Vec<String> {
    vec![
        format!("window {:.6} {:.6}", lr.window.0, lr.window.1),
        format!("n_used {}", lr.n_used),
        format!("truncation_error_estimate {:.3e}", lr.truncation_error_estimate),
        format!("drift {:.3e}", lr.drift),
    ]
}

fn run_limits(model: &ModelSpec, cfg: &RunConfig) -> Result<LimitingCharacteristics> {
    limiting_regime(
        model,
        cfg.truncation.n_initial,
        cfg.truncation.n_cap,
        cfg.truncation.tolerance,
        cfg.solver.t_star,
        cfg.solver.tol,
    )
}

fn cmd_limits(cfg: RunConfig) -> Result<ExitCode> {
    let (model, _, dir, hash) = prepare(&cfg)?;
    let lr = run_limits(&model, &cfg)?;
    let meta = limits_meta(&lr);
    let p0_rows: Vec<Vec<f64>> =
        lr.grid.iter().zip(&lr.p0_curve).map(|(&t, &v)| vec![t, v]).collect();
    let mean_rows: Vec<Vec<f64>> =
        lr.grid.iter().zip(&lr.mean_curve).map(|(&t, &v)| vec![t, v]).collect();
    write_csv(&dir, "p0_curve.csv", &hash, &meta, "t,p0", &p0_rows)?;
    write_csv(&dir, "mean_curve.csv", &hash, &meta, "t,mean", &mean_rows)?;
    write_json(&dir, "limits.json", &hash, &lr)?;
    Ok(ExitCode::SUCCESS)
}

fn parse_classes(spec: &str) -> Result<Vec<QueueClass>> {
    spec.split(',')
        .map(|label| match label.trim() {
            "i" => Ok(QueueClass::Bd),
            "ii" => Ok(QueueClass::BatchArrival),
            "iii" => Ok(QueueClass::BatchService),
            "iv" => Ok(QueueClass::BatchBoth),
            other => Err(Error::Usage(format!("unknown class label {other:?}"))),
        })
        .collect()
}

#[derive(Serialize)]
struct ClassGap {
    class_a: String,
    class_b: String,
    mean_gap: f64,
    p0_gap: f64,
}

#[derive(Serialize)]
struct CompareClassesReport {
    classes: Vec<String>,
    mean_level: f64,
    max_mean_gap: f64,
    max_relative_mean_gap: f64,
    max_p0_gap: f64,
    /// All pairwise mean gaps below 1e-3 of the mean level.
    means_coincide: bool,
    /// Some pairwise idle-probability gap exceeds 0.02.
    p0_diverges: bool,
    gaps: Vec<ClassGap>,
}

fn cmd_compare_classes(cfg: RunConfig, classes: &str) -> Result<ExitCode> {
    let classes = parse_classes(classes)?;
    if classes.len() < 2 {
        return Err(Error::Usage("need at least two classes to compare".into()));
    }
    let (base, _, dir, hash) = prepare(&cfg)?;
    let models: Vec<ModelSpec> = classes
        .iter()
        .map(|&class| ModelSpec { class, ..base.clone() })
        .collect();
    let curves: Vec<LimitingCharacteristics> = std::thread::scope(|scope| {
        let handles: Vec<_> = models
            .iter()
            .map(|model| scope.spawn(|| run_limits(model, &cfg)))
            .collect();
        handles
            .into_iter()
            .zip(&classes)
            .map(|(h, class)| {
                h.join().unwrap_or_else(|_| {
                    Err(Error::Solver(format!("class {} run panicked", class.label())))
                })
                .map_err(|e| Error::Solver(format!("class {}: {e}", class.label())))
            })
            .collect::<Result<_>>()
    })?;
    let points = curves[0].mean_curve.len();
    let mean_level = curves.iter().flat_map(|c| c.mean_curve.iter()).sum::<f64>()
        / (curves.len() * points) as f64;
    let mut gaps = Vec::new();
    let mut rows = Vec::new();
    let (mut max_mean, mut max_p0) = (0.0f64, 0.0f64);
    for a in 0..curves.len() {
        for b in a + 1..curves.len() {
            let mut mean_gap: f64 = 0.0;
            let mut p0_gap: f64 = 0.0;
            for j in 0..points {
                mean_gap =
                    mean_gap.max((curves[a].mean_curve[j] - curves[b].mean_curve[j]).abs());
                p0_gap = p0_gap.max((curves[a].p0_curve[j] - curves[b].p0_curve[j]).abs());
            }
            gaps.push(ClassGap {
                class_a: classes[a].label().to_string(),
                class_b: classes[b].label().to_string(),
                mean_gap,
                p0_gap,
            });
            rows.push(vec![a as f64, b as f64, mean_gap, p0_gap]);
            max_mean = max_mean.max(mean_gap);
            max_p0 = max_p0.max(p0_gap);
        }
    }
    let rel = if mean_level > 0.0 { max_mean / mean_level } else { max_mean };
    let report = CompareClassesReport {
        classes: classes.iter().map(|c| c.label().to_string()).collect(),
        mean_level,
        max_mean_gap: max_mean,
        max_relative_mean_gap: rel,
        max_p0_gap: max_p0,
        means_coincide: rel < 1e-3,
        p0_diverges: max_p0 > 0.02,
        gaps,
    };
    write_csv(
        &dir,
        "class_gaps.csv",
        &hash,
        &[format!("classes {}", report.classes.join(","))],
        "index_a,index_b,mean_gap,p0_gap",
        &rows,
    )?;
    write_json(&dir, "compare_classes.json", &hash, &report)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(cfg: RunConfig) -> Result<ExitCode> {
    let (model, _, dir, hash) = prepare(&cfg)?;
    let t_star = cfg.solver.t_star;
    let grid: Vec<f64> = (0..=4).map(|j| t_star + 0.25 * j as f64).collect();
    let n = cfg.truncation.n_initial;
    let traj = solve_at(&model, n, &unit_vector(n, 0), 0.0, &grid, cfg.solver.tol)?;
    let emp = simulate(
        &model,
        &SimConfig {
            n_paths: cfg.simulation.paths,
            seed: cfg.simulation.seed,
            x0: 0,
            sample_grid: grid,
            n,
        },
    )?;
    let report = compare_to_ode(&emp, &traj)?;
    {
        let mut out = BufWriter::new(File::create(dir.join("empirical.csv"))?);
        writeln!(out, "# queuebounds {TOOL_VERSION} config {hash}")?;
        emp.write_csv(&mut out)?;
    }
    let pass = report.pass;
    write_json(&dir, "simulation.json", &hash, &report)?;
    if pass {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("simulation disagrees with the ODE solution beyond the z threshold");
        Ok(ExitCode::from(2))
    }
}
