//! `caa` command-line front end.
//!
//! Exit codes: 0 on success, 1 on parse, validation or evidence errors,
//! 2 on usage and I/O errors. Failures print one line on stderr.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use caa_core::experiments::{export_simplex_pmf, infer, monte_carlo_errors, oracle_check, PosteriorMode};
use caa_core::model::{load_model, CaaModel};
use caa_core::oracle::DEFAULT_ENUMERATION_CAP;
use caa_core::sim::{read_trajectory, simulate_episode, write_trajectory, RngStream};
use caa_core::CaaError;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "caa", version, about = "Estimate an adversary's beliefs from its actions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Filter,
    Smooth,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one episode and write it as a trajectory file.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        seed: u64,
        /// Stream index within the seed.
        #[arg(long, default_value_t = 0)]
        index: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Posterior over the adversary's beliefs at every step.
    Infer {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the reachable-belief graph as JSON.
        #[arg(long)]
        dump_graph: Option<PathBuf>,
    },
    /// Mean filter and smoother errors per step over seeded runs (CSV).
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        runs: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Filter and smoother pmfs at one step, projected onto the simplex (CSV).
    ExportSimplex {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare both estimators with exhaustive enumeration on seeded runs.
    OracleCheck {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        horizon: usize,
        #[arg(long)]
        runs: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        cap: u64,
    },
}

enum Failure {
    Evidence(String),
    Usage(String),
}

impl From<CaaError> for Failure {
    fn from(e: CaaError) -> Self {
        if e.is_evidence_or_validation() {
            Failure::Evidence(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn model(path: &Path) -> Result<CaaModel, Failure> {
    load_model(path).map_err(|e| match e {
        CaaError::Io(io) => Failure::Usage(io.to_string()),
        other => Failure::Evidence(format!("{}: {other}", path.display())),
    })
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate { model: m, horizon, seed, index, out } => {
            let m = model(&m)?;
            let traj = simulate_episode(&m, horizon, &mut RngStream::new(seed, index))?;
            write_trajectory(&out, &traj, &m)?;
        }
        Command::Infer { mode, model: m, traj, out, dump_graph } => {
            let m = model(&m)?;
            let traj = read_trajectory(&traj, &m)?;
            let mode = match mode {
                Mode::Filter => PosteriorMode::Filter,
                Mode::Smooth => PosteriorMode::Smoothed,
            };
            let (report, graph) = infer(&m, &traj, mode)?;
            write(&out, &json(&report))?;
            if let Some(path) = dump_graph {
                write(&path, &json(&graph.dump()))?;
            }
        }
        Command::Evaluate { model: m, horizon, runs, seed, out } => {
            let m = model(&m)?;
            write(&out, &monte_carlo_errors(&m, horizon, runs, seed)?.to_csv())?;
        }
        Command::ExportSimplex { model: m, traj, k, out } => {
            let m = model(&m)?;
            let traj = read_trajectory(&traj, &m)?;
            write(&out, &export_simplex_pmf(&m, &traj, k)?.to_csv())?;
        }
        Command::OracleCheck { model: m, horizon, runs, seed, tol, cap } => {
            let m = model(&m)?;
            let check = oracle_check(&m, horizon, runs, seed, tol, cap)?;
            println!(
                "{} runs, max filter TV {:.3e}, max smoother TV {:.3e}, {} mismatches",
                check.runs,
                check.max_filter_tv,
                check.max_smoother_tv,
                check.failures.len()
            );
            if let Some(&(r, k)) = check.failures.first() {
                return Err(Failure::Evidence(format!(
                    "run {r} disagrees with the oracle at k = {k} (tolerance {tol:e})"
                )));
            }
        }
    }
    Ok(())
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            if code == 0 {
                let _ = e.print();
            } else {
                let first = e.to_string();
                eprintln!("error: {}", first.lines().next().unwrap_or("").trim_start_matches("error: "));
            }
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(Failure::Evidence(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}
