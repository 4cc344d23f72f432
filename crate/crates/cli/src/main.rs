//! `rasim`: validate configurations, run joint mode/beamformer solves and
//! sweeps, and inspect mode codebooks.

mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use ra_core::em::{CodebookFile, ModeCodebook};
use ra_core::optimizer::{joint_optimize, Objective, ObjectiveKind, SearchSpace};
use ra_core::scenario::build_scenario;
use ra_core::sweep::{run_sweep, ModeFamily, SweepResult, CSV_HEADER};
use serde::Serialize;

use config::{Overrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Io { .. } => 3,
        }
    }

    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn classify(e: ra_core::Error, path: &Path) -> CliError {
    use ra_core::Error as E;
    match e {
        E::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        E::Solver(_) | E::NonFinite(_) | E::AtGridPoint { .. } => CliError::Solver(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "rasim",
    version,
    about = "Reconfigurable-antenna array simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a configuration file and list every violated invariant
    Validate {
        /// Configuration file (TOML)
        config: PathBuf,
    },
    /// Run a single joint solve or a sweep
    Run {
        /// Configuration file (TOML); built-in defaults when omitted
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Write or check a mode codebook file
    Codebook {
        #[command(subcommand)]
        action: CodebookAction,
    },
}

#[derive(Debug, Subcommand)]
enum CodebookAction {
    /// Write the built-in codebook
    Dump {
        /// Destination file (JSON)
        path: PathBuf,
    },
    /// Verify unit radiated power of every pattern
    Check {
        /// Codebook file (JSON)
        path: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are configuration errors
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Validate { config } => cmd_validate(&config),
        Command::Run { config, overrides } => cmd_run(config.as_deref(), &overrides),
        Command::Codebook { action } => cmd_codebook(action),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn cmd_validate(path: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(path)?;
    let diags = cfg.diagnostics();
    for d in &diags {
        println!("{d}");
    }
    if diags.is_empty() {
        println!("{}: valid", path.display());
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{} invalid field(s) in {}",
            diags.len(),
            path.display()
        )))
    }
}

#[derive(Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    command: Vec<String>,
    config: &'a RunConfig,
    rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    aligned_deg: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    fixed_clutter_deg: Vec<f64>,
}

fn cmd_run(path: Option<&Path>, overrides: &Overrides) -> Result<(), CliError> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(overrides);
    if let Some(d) = cfg.diagnostics().into_iter().next() {
        return Err(CliError::Config(d.to_string()));
    }
    let threads = cfg
        .parallel
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("parallel: {e}")))?;
    let out = cfg.output.clone();
    std::fs::create_dir_all(&out).map_err(CliError::io(&out))?;
    let start = Instant::now();
    match &cfg.sweep {
        Some(spec) => {
            let res = pool
                .install(|| run_sweep(&cfg.scenario, spec))
                .map_err(|e| classify(e, &out))?;
            write_sweep(&out, &res)?;
            write_metadata(&out, &cfg, res.rows.len(), &res)?;
            summarize_sweep(&res, start.elapsed().as_secs_f64());
        }
        None => {
            let rows = pool.install(|| single_run(&cfg, &out))?;
            let empty = SweepResult {
                kind: ra_core::sweep::SweepKind::Angle,
                grid: vec![],
                aligned_deg: None,
                fixed_clutter_deg: vec![],
                rows: vec![],
            };
            write_metadata(&out, &cfg, rows, &empty)?;
            println!("runtime: {:.3} s", start.elapsed().as_secs_f64());
        }
    }
    println!("results written to {}", out.display());
    Ok(())
}

fn single_run(cfg: &RunConfig, out: &Path) -> Result<usize, CliError> {
    let scenario = build_scenario(&cfg.scenario).map_err(|e| classify(e, out))?;
    let solve = &cfg.solve;
    let objective = Objective::for_scenario(solve.objective, &scenario);
    let cb = &scenario.codebook;
    let omni = cb.omni_index().unwrap_or(0);
    let pols: Vec<usize> = (0..cb.polarizations().len()).collect();
    let space = match solve.family {
        ModeFamily::Pattern => SearchSpace::new(cb.searchable_patterns(), vec![0], solve.scope),
        ModeFamily::Polarization => SearchSpace::new(vec![omni], pols, solve.scope),
        ModeFamily::Joint => SearchSpace::new(cb.searchable_patterns(), pols, solve.scope),
    };
    let sol = joint_optimize(
        &objective,
        &scenario,
        &solve.architecture,
        &space,
        &solve.options,
    )
    .map_err(|e| classify(e, out))?;

    let path = out.join("results.csv");
    let file = File::create(&path).map_err(CliError::io(&path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let write = |w: &mut csv::Writer<BufWriter<File>>| -> csv::Result<()> {
        w.write_record(CSV_HEADER)?;
        w.write_record([
            String::new(),
            cfg.scenario.seed.to_string(),
            solve.architecture.label(),
            solve.objective.as_str().to_string(),
            format_float(sol.value),
            sol.report.evaluations.to_string(),
            format_float(sol.pre_factor_value),
            format_float(sol.power_w),
        ])?;
        w.flush()?;
        Ok(())
    };
    write(&mut w).map_err(|e| CliError::Io {
        path: path.clone(),
        source: e.into(),
    })?;
    let report_path = out.join("report.json");
    let report = serde_json::json!({
        "report": sol.report,
        "pre_factor_value": sol.pre_factor_value,
        "value": sol.value,
        "factorization_residual": sol.factorization_residual,
        "power_w": sol.power_w,
        "architecture": solve.architecture,
    });
    std::fs::write(&report_path, serde_json::to_string_pretty(&report).unwrap())
        .map_err(CliError::io(&report_path))?;

    let unit = |v: f64| match solve.objective {
        ObjectiveKind::RadarScnr => format!("{v:.6e} ({:.3} dB)", 10.0 * v.log10()),
        ObjectiveKind::CommSumRate => format!("{v:.6} bit/s/Hz"),
    };
    println!("objective: {}", solve.objective.as_str());
    println!("architecture: {}", solve.architecture.label());
    println!("best value: {}", unit(sol.value));
    if let Some(res) = sol.factorization_residual {
        println!("pre-factorization value: {}", unit(sol.pre_factor_value));
        println!("post-factorization value: {}", unit(sol.value));
        println!("factorization residual: {res:.6e}");
    }
    println!("evaluations: {}", sol.report.evaluations);
    println!("power consumption: {:.2} W", sol.power_w);
    Ok(1)
}

/// Shortest representation that reads back to the same `f64`.
fn format_float(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| v.to_string())
}

fn write_sweep(out: &Path, res: &SweepResult) -> Result<(), CliError> {
    let path = out.join("results.csv");
    let file = File::create(&path).map_err(CliError::io(&path))?;
    res.write_csv(BufWriter::new(file))
        .map_err(|e| classify(e, &path))?;
    let path = out.join("aggregates.csv");
    let file = File::create(&path).map_err(CliError::io(&path))?;
    res.write_aggregates_csv(BufWriter::new(file))
        .map_err(|e| classify(e, &path))?;
    Ok(())
}

fn write_metadata(
    out: &Path,
    cfg: &RunConfig,
    rows: usize,
    res: &SweepResult,
) -> Result<(), CliError> {
    let meta = Metadata {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: std::env::args().collect(),
        config: cfg,
        rows,
        aligned_deg: res.aligned_deg,
        fixed_clutter_deg: res.fixed_clutter_deg.clone(),
    };
    let path = out.join("metadata.json");
    let mut f = File::create(&path).map_err(CliError::io(&path))?;
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    writeln!(f, "{text}").map_err(CliError::io(&path))?;
    let path = out.join("config.toml");
    std::fs::write(&path, cfg.to_toml()).map_err(CliError::io(&path))?;
    Ok(())
}

fn summarize_sweep(res: &SweepResult, secs: f64) {
    println!("rows: {}", res.rows.len());
    for arch in res.arch_labels() {
        let best = res
            .rows
            .iter()
            .filter(|r| r.arch == arch)
            .map(|r| r.value)
            .fold(f64::NEG_INFINITY, f64::max);
        let evals: usize = res
            .rows
            .iter()
            .filter(|r| r.arch == arch)
            .map(|r| r.evals)
            .sum();
        println!("{arch}: best value {best:.6e}, evaluations {evals}");
    }
    if let Some(a) = res.aligned_deg {
        println!("aligned grid point: {a:.4} deg");
    }
    println!("runtime: {secs:.3} s");
}

fn cmd_codebook(action: CodebookAction) -> Result<(), CliError> {
    match action {
        CodebookAction::Dump { path } => {
            ModeCodebook::default_codebook()
                .save(&path)
                .map_err(|e| classify(e, &path))?;
            println!("wrote {}", path.display());
            Ok(())
        }
        CodebookAction::Check { path } => {
            let file = CodebookFile::load(&path).map_err(|e| classify(e, &path))?;
            let checks = file.check_normalization();
            let mut failed = 0;
            for c in &checks {
                let status = if c.passed { "ok" } else { "FAIL" };
                println!(
                    "pattern {}: mean radiated power {:.12} {status}",
                    c.index, c.measured
                );
                failed += (!c.passed) as usize;
            }
            println!("{} polarization states", file.polarizations.len());
            if failed == 0 {
                Ok(())
            } else {
                Err(CliError::Config(format!(
                    "{failed} pattern(s) not normalized within 1e-6"
                )))
            }
        }
    }
}
