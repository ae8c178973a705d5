//! `ouldp` command-line front end.
//!
//! Exit codes: 0 on success, 2 for usage errors, 3 for numerical failures.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::output::Format;

#[derive(Debug, Parser)]
#[command(name = "ouldp", version, about = "Large-deviation toolkit for the shifted Ornstein-Uhlenbeck drift MLE")]
pub struct Cli {
    /// Output format; defaults to csv for tables and jsonl for reports.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write to this file instead of standard output.
    #[arg(long, global = true)]
    pub output: Option<std::path::PathBuf>,
    /// `key = value` file of long flag names; explicit flags win.
    #[arg(long, global = true)]
    pub config: Option<std::path::PathBuf>,
    /// Monte Carlo worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rate functions I_{theta,gamma}(c, d), I_theta(c) and I_gamma(d).
    Rate(RateArgs),
    /// Sharp tail approximation of P(theta_hat_T >= c), with optional checks.
    Tail(TailArgs),
    /// Exact normalized CGF L_T(a, b) and its expansion.
    Cgf(CgfArgs),
    /// Discretized chaos decomposition of Z_T(a, b).
    Spectral(SpectralArgs),
    /// One exact-transition path.
    Simulate(SimulateArgs),
    /// Estimators and sufficient statistics on simulated paths.
    Estimate(EstimateArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Drift parameter, strictly negative.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_theta)]
    pub theta: f64,
    /// Shift parameter.
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub gamma: f64,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, allow_hyphen_values = true, conflicts_with = "c_range")]
    pub c: Option<f64>,
    /// `lo:hi:step`
    #[arg(long, allow_hyphen_values = true)]
    pub c_range: Option<String>,
    #[arg(long, allow_hyphen_values = true, conflicts_with = "d_range")]
    pub d: Option<f64>,
    /// `lo:hi:step`
    #[arg(long, allow_hyphen_values = true)]
    pub d_range: Option<String>,
}

#[derive(Debug, Args)]
pub struct TailArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub c: f64,
    #[arg(long = "T")]
    pub horizon: f64,
    /// Monte Carlo paths for a comparison estimate.
    #[arg(long)]
    pub mc: Option<usize>,
    /// Importance-sample the Monte Carlo estimate.
    #[arg(long, requires = "mc")]
    pub is: bool,
    /// Sampling drift for importance sampling; defaults to c when c < 0.
    #[arg(long, allow_hyphen_values = true, requires = "is")]
    pub tilt: Option<f64>,
    /// Exact c = 0 probability by quadrature.
    #[arg(long)]
    pub exact_c0: bool,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Hat)]
    pub estimator: EstimatorArg,
}

#[derive(Debug, Args)]
pub struct CgfArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub a: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub b: f64,
    #[arg(long = "T")]
    pub horizon: f64,
}

#[derive(Debug, Args)]
pub struct SpectralArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub a: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub b: f64,
    #[arg(long, default_value_t = 2)]
    pub p: u32,
    #[arg(long = "T")]
    pub horizon: f64,
    #[arg(long)]
    pub steps: usize,
    /// Also evaluate the series CGF at this scale.
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<f64>,
    /// Threshold for the eigenvalue count q_T(eps).
    #[arg(long)]
    pub eps: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long = "T")]
    pub horizon: f64,
    #[arg(long)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long = "T")]
    pub horizon: f64,
    #[arg(long)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub paths: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Hat,
    Tilde,
}

fn parse_theta(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v < 0.0 {
        Ok(v)
    } else {
        Err(format!("theta must be strictly negative (stable mean reversion), got {v}"))
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let argv = match config::merge(argv) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
