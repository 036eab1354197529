//! `diffirl`: simulate, verify bias kernels, fit and learn from the command
//! line.
//!
//! Exit codes: 0 success, 1 verification failure, 2 validation error,
//! 3 runtime error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    VerificationFailed,
}

#[derive(Debug, Parser)]
#[command(name = "diffirl", version, about = "Opinion diffusion with memory and bias, model fitting and cost learning")]
struct Cli {
    /// JSON run configuration; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the diffusion model under given target actions.
    Simulate(SimulateArgs),
    /// Check a kernel against the confirmation and novelty behaviours.
    VerifyBias(VerifyArgs),
    /// Fit kernel exponents and memory decay to an observed series.
    Fit(FitArgs),
    /// Learn target cost functions from the last window of a series.
    Learn(LearnArgs),
    /// Write plot-ready CSVs from a series.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Model JSON or fit report.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Kernel exponent(s): one value for every human or one per human.
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    #[arg(long)]
    decay: Option<f64>,
    #[arg(long)]
    tau: Option<usize>,
    /// `sensed`, `fitted` or a constant in [-1, 1].
    #[arg(long, allow_hyphen_values = true)]
    surround: Option<String>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    graph: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    /// Initial human opinions, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    initial: Option<Vec<f64>>,
    /// CSV with header `u1..uT` and one row per time step `0..=steps`.
    #[arg(long)]
    actions: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// `tanh_power`, `hk`, `continuous` or `constant`.
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Lower and upper confidence bounds for `hk`.
    #[arg(long, num_args = 2)]
    eps: Option<Vec<f64>>,
    /// Rate of `exp(-rate·d²)` for `continuous`.
    #[arg(long)]
    phi_rate: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    series: Option<PathBuf>,
    #[arg(long)]
    tau: Option<usize>,
    /// `sensed`, `fitted` or a constant in [-1, 1].
    #[arg(long, allow_hyphen_values = true)]
    surround: Option<String>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    /// Predict each step from observed data instead of rolling out.
    #[arg(long)]
    teacher_forcing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LearnArgs {
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    series: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    /// Number of trailing steps to learn from.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Basis names, comma separated.
    #[arg(long, value_delimiter = ',')]
    basis: Option<Vec<String>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    series: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ModelArgs {
    fn apply(self, c: &mut RunConfig) {
        c.model = self.model;
        c.alpha = self.alpha;
        c.decay = self.decay;
        c.tau = self.tau;
        c.surround = self.surround;
    }
}

fn flags(command: Command, seed: Option<u64>) -> (&'static str, RunConfig) {
    let mut c = RunConfig {
        seed,
        ..RunConfig::default()
    };
    let name = match command {
        Command::Simulate(a) => {
            c.graph = a.graph;
            a.model.apply(&mut c);
            c.initial = a.initial;
            c.actions = a.actions;
            c.out = a.out;
            "simulate"
        }
        Command::VerifyBias(a) => {
            c.kernel = a.kernel;
            c.alpha = a.alpha.map(|v| vec![v]);
            c.eps = a.eps;
            c.phi_rate = a.phi_rate;
            c.samples = a.samples;
            c.out = a.out;
            "verify-bias"
        }
        Command::Fit(a) => {
            c.graph = a.graph;
            c.series = a.series;
            c.tau = a.tau;
            c.surround = a.surround;
            c.restarts = a.restarts;
            c.max_sweeps = a.max_sweeps;
            c.teacher_forcing = a.teacher_forcing.then_some(true);
            c.out = a.out;
            "fit"
        }
        Command::Learn(a) => {
            c.graph = a.graph;
            c.series = a.series;
            a.model.apply(&mut c);
            c.window = a.window;
            c.restarts = a.restarts;
            c.max_iters = a.max_iters;
            c.basis = a.basis;
            c.out = a.out;
            "learn"
        }
        Command::Export(a) => {
            c.series = a.series;
            c.out = a.out;
            "export"
        }
    };
    (name, c)
}

fn run(cli: Cli) -> Result<Status, CliError> {
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let (name, overrides) = flags(cli.command, cli.seed);
    let config = base.merge(&overrides);
    match name {
        "simulate" => commands::simulate(&config),
        "verify-bias" => commands::verify_bias(&config),
        "fit" => commands::fit(&config),
        "learn" => commands::learn(&config),
        _ => commands::export(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::VerificationFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
