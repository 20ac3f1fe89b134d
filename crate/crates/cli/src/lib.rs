//! `uhfflow`: config-driven experiments and acceptance suites on top of
//! `uhf-core`.
//!
//! Every command reads a TOML experiment file, writes CSV tables under
//! `<out>/results/` and a machine-readable `<out>/report.json`, and exits
//! with 0 (all verdicts pass), 1 (a verdict failed), 2 (configuration error)
//! or 3 (engine error).

pub mod commands;
pub mod config;
pub mod report;
pub mod suites;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_config, Experiment};
use crate::report::{OutputDir, RunReport};

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Engine { check: String, msg: String },
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Engine { check, msg } => write!(f, "engine error in {check}: {msg}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Engine { .. } | CliError::Io(_) => 3,
        }
    }

    /// Wraps an engine error raised while running `check`.
    pub fn engine(check: &str) -> impl FnOnce(uhf_core::Error) -> CliError + '_ {
        move |e| match e {
            uhf_core::Error::Config(m) => CliError::Config(format!("{check}: {m}")),
            uhf_core::Error::Parse { line, msg } => CliError::Config(format!("{check}: line {line}: {msg}")),
            e => CliError::Engine { check: check.to_string(), msg: e.to_string() },
        }
    }
}

pub const EXIT_PASS: i32 = 0;
pub const EXIT_VERDICT: i32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "uhfflow",
    version,
    about = "Quantum dynamical semigroups on lattice UHF algebras and their dilations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve observables under the semigroup.
    Evolve(RunArgs),
    /// Decay towards the ergodic state.
    Ergodicity(RunArgs),
    /// Matrix elements of the dilation flow.
    Flow(RunArgs),
    /// Derivation expansion identity and bounds.
    Lemma(RunArgs),
    /// Run every acceptance criterion.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, env = "UHFFLOW_OUT", default_value = "uhfflow-out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    /// Optional; only its `seed` is used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, env = "UHFFLOW_OUT", default_value = "uhfflow-out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

fn set_jobs(jobs: Option<usize>) {
    if let Some(j) = jobs {
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
}

fn read(path: &PathBuf) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Runs a command and returns the process exit code. Errors are printed to
/// stderr; the report (with partial outputs) is written whenever the output
/// directory could be created.
pub fn run(cli: Cli) -> i32 {
    let prepared = match cli.command {
        Command::Selftest(a) => selftest(a),
        Command::Evolve(a) => prepare("evolve", a, commands::cmd_evolve),
        Command::Ergodicity(a) => prepare("ergodicity", a, commands::cmd_ergodicity),
        Command::Flow(a) => prepare("flow", a, commands::cmd_flow),
        Command::Lemma(a) => prepare("lemma", a, commands::cmd_lemma),
    };
    let (dir, mut report, outcome) = match prepared {
        Ok(p) => p,
        Err(e) => return report_error(e),
    };
    for v in report.verdicts.iter().filter(|v| !v.pass) {
        eprintln!("uhfflow: verdict failed: {} ({:e} {} {:e})", v.name, v.measured, v.relation, v.threshold);
    }
    let code = match &outcome {
        Err(e) => {
            eprintln!("uhfflow: {e}");
            report.errors.push(e.to_string());
            e.exit_code()
        }
        Ok(()) if report.all_pass() => EXIT_PASS,
        Ok(()) => EXIT_VERDICT,
    };
    match dir.finish(&mut report) {
        Ok(()) => code,
        Err(e) => report_error(e),
    }
}

type Prepared = (OutputDir, RunReport, Result<(), CliError>);
type CommandFn = fn(&Experiment, &OutputDir, &mut RunReport) -> Result<(), CliError>;

fn prepare(name: &str, a: RunArgs, f: CommandFn) -> Result<Prepared, CliError> {
    set_jobs(a.jobs);
    let text = read(&a.config)?;
    let exp = Experiment::from_config(parse_config(&text)?, a.seed)?;
    let dir = OutputDir::create(&a.out)?;
    let mut report = RunReport::new(name, &text, exp.seed);
    let res = f(&exp, &dir, &mut report);
    Ok((dir, report, res))
}

fn selftest(a: SelftestArgs) -> Result<Prepared, CliError> {
    set_jobs(a.jobs);
    let text = a.config.as_ref().map(read).transpose()?;
    let file_seed = match &text {
        Some(t) => parse_config(t)?.seed,
        None => None,
    };
    let seed = a.seed.or(file_seed).unwrap_or(0);
    let dir = OutputDir::create(&a.out)?;
    let mut report = RunReport::new("selftest", text.as_deref().unwrap_or(""), seed);
    let res = commands::cmd_selftest(&dir, &mut report, seed);
    Ok((dir, report, res))
}

fn report_error(e: CliError) -> i32 {
    eprintln!("uhfflow: {e}");
    e.exit_code()
}
