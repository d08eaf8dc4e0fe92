//! Command-line front end. Exit codes: 0 success, 1 usage or schema error,
//! 2 solver error, 3 falsified certificate or failed report.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::experiments::{run_named, EXPERIMENTS};
use crate::ivp::solve;
use crate::lyapunov::{check_theorem, LyapunovError, Theorem};
use crate::ode::SolveError;
use crate::scenario::{Overrides, Scenario, ScenarioError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_FALSIFIED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fuzzy-lyapunov", version, about = "Fuzzy differential equations and Lyapunov stability checks")]
struct Cli {
    /// Number of uniformly spaced alpha levels.
    #[arg(long, global = true)]
    levels: Option<usize>,
    /// End time of the simulated trajectory (or probe length for `report`).
    #[arg(long, global = true)]
    horizon: Option<f64>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Seed of the sampling-plan shuffle.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the scenario's initial value problem and write the trajectory as CSV.
    Simulate {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a stability theorem's hypotheses and write the certificate as JSON.
    Certify {
        file: PathBuf,
        #[arg(long)]
        theorem: Option<Theorem>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a built-in experiment (`example-3-1` or `crisp-exponential`).
    Report {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(out: &Option<PathBuf>, text: &str, stdout: &mut dyn Write) -> std::io::Result<()> {
    match out {
        Some(p) => fs::write(p, text),
        None => stdout.write_all(text.as_bytes()),
    }
}

fn scenario_code(e: &ScenarioError) -> i32 {
    match e {
        ScenarioError::Solve(SolveError::InvalidProblem(_)) => EXIT_USAGE,
        ScenarioError::Solve(_) => EXIT_SOLVER,
        _ => EXIT_USAGE,
    }
}

fn lyapunov_code(e: &LyapunovError) -> i32 {
    match e {
        LyapunovError::Solve(SolveError::InvalidProblem(_)) => EXIT_USAGE,
        LyapunovError::Solve(_) | LyapunovError::Eval { .. } => EXIT_SOLVER,
        _ => EXIT_USAGE,
    }
}

fn load(file: &Path, ov: &Overrides, stderr: &mut dyn Write) -> Result<Scenario, i32> {
    Scenario::load(file, ov).map_err(|e| {
        let _ = writeln!(stderr, "error: {}: {e}", file.display());
        scenario_code(&e)
    })
}

/// Runs the command line `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    let ov = Overrides {
        levels: cli.levels,
        horizon: cli.horizon,
        dt: cli.dt,
        seed: cli.seed,
    };
    let io_fail = |stderr: &mut dyn Write, e: std::io::Error| {
        let _ = writeln!(stderr, "error: cannot write output: {e}");
        EXIT_USAGE
    };
    match cli.command {
        Command::Simulate { file, out } => {
            let scn = match load(&file, &ov, stderr) {
                Ok(s) => s,
                Err(code) => return code,
            };
            match solve(&scn.ivp) {
                Ok(traj) => match emit(&out, &traj.to_csv(), stdout) {
                    Ok(()) => EXIT_OK,
                    Err(e) => io_fail(stderr, e),
                },
                Err(e) => {
                    let _ = writeln!(stderr, "solver error: {e}");
                    if matches!(e, SolveError::InvalidProblem(_)) {
                        EXIT_USAGE
                    } else {
                        EXIT_SOLVER
                    }
                }
            }
        }
        Command::Certify { file, theorem, out } => {
            let scn = match load(&file, &ov, stderr) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let Some(which) = theorem.or(scn.theorem) else {
                let _ = writeln!(stderr, "error: no theorem given (use --theorem or run.theorem)");
                return EXIT_USAGE;
            };
            let spec = match scn.spec() {
                Ok(s) => s,
                Err(e) => {
                    let _ = writeln!(stderr, "error: {}: {e}", file.display());
                    return EXIT_USAGE;
                }
            };
            let cert = match check_theorem(spec, scn.ivp.rhs(), which, &scn.plan) {
                Ok(c) => c,
                Err(e) => {
                    let _ = writeln!(stderr, "error: {e}");
                    return lyapunov_code(&e);
                }
            };
            let text = serde_json::to_string_pretty(&cert).expect("certificate serializes") + "\n";
            if let Err(e) = emit(&out, &text, stdout) {
                return io_fail(stderr, e);
            }
            if let Some(c) = &cert.counterexample {
                let _ = writeln!(stderr, "falsified: {}: {}", c.hypothesis, c.detail);
                EXIT_FALSIFIED
            } else {
                EXIT_OK
            }
        }
        Command::Report { name, out } => {
            let Some(rep) = run_named(&name, &ov) else {
                let _ = writeln!(
                    stderr,
                    "error: unknown experiment {name:?}\n\nUsage: fuzzy-lyapunov report <{}> [--out PATH]",
                    EXPERIMENTS.join("|")
                );
                return EXIT_USAGE;
            };
            let _ = stdout.write_all(rep.text_table().as_bytes());
            if let Some(p) = &out {
                let text = serde_json::to_string_pretty(&rep).expect("report serializes") + "\n";
                if let Err(e) = fs::write(p, text) {
                    return io_fail(stderr, e);
                }
            }
            if rep.passed {
                EXIT_OK
            } else {
                EXIT_FALSIFIED
            }
        }
    }
}
