//! Command-line front end: `run`, `variance`, `sweep`, `plot` and `check`.
//!
//! Experiment settings come from three layers: built-in defaults, then an
//! optional `--config` file of `key=value` lines, then command-line flags.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use limopt_core::OptimizerKind;

mod check;
mod config;
mod plot;
mod run;
mod sweep;
mod variance;

pub use check::{cmd_check, run_checks, CheckResult};
pub use config::{
    parse_key_values, read_key_values, ExperimentConfig, KeyValue, ProblemKind, CONFIG_KEYS,
};
pub use plot::{cmd_plot, series_name};
pub use run::{
    cmd_run, default_quadratic, execute, RunOutcome, LOG_EVERY, SYNTHETIC_CLASSES,
    SYNTHETIC_FEATURES, SYNTHETIC_SAMPLES, SYNTHETIC_SPREAD,
};
pub use sweep::{cmd_sweep, expand_grid, read_grid, Grid, SweepRow, SUMMARY_FILE, SUMMARY_HEADER};
pub use variance::{
    cmd_variance, render_variance_csv, variance_reports, VarianceRequest, VARIANCE_HEADER,
};

use crate::error::Result;

#[derive(Parser, Debug)]
#[command(name = "limopt", version, about = "Momentum optimizer experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train one optimizer on one problem and write its run CSV
    Run(ExperimentArgs),
    /// Estimate the variance of the update direction by Monte Carlo
    Variance(VarianceArgs),
    /// Run every point of a parameter grid and summarize
    Sweep(SweepArgs),
    /// Plot the loss curves of run CSVs as an SVG chart
    Plot(PlotArgs),
    /// Run the built-in invariant checks
    Check(CheckArgs),
}

fn parse_optimizer(s: &str) -> std::result::Result<OptimizerKind, String> {
    s.parse().map_err(|e: limopt_core::Error| e.to_string())
}

#[derive(Args, Debug, Default, Clone)]
pub struct ExperimentArgs {
    /// File of key=value lines; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub problem: Option<ProblemKind>,
    /// sgd, sgdm, lim or adam
    #[arg(long, value_parser = parse_optimizer)]
    pub optimizer: Option<OptimizerKind>,
    /// Base step size; iteration k uses alpha0 / sqrt(k)
    #[arg(long, allow_negative_numbers = true)]
    pub alpha0: Option<f64>,
    /// Fixed decay factor for sgdm
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    /// Decay exponent for lim
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub iters: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory with uncompressed MNIST training files
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub hidden_width: Option<usize>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dimension of the noise and quadratic oracles
    #[arg(long)]
    pub dim: Option<usize>,
    /// Noise level of the noise and quadratic oracles
    #[arg(long, allow_negative_numbers = true)]
    pub sigma: Option<f64>,
    /// Gradient-dependent noise coefficient of the quadratic oracle
    #[arg(long, allow_negative_numbers = true)]
    pub noise_mv: Option<f64>,
    #[arg(long)]
    pub adam_beta1: Option<f64>,
    #[arg(long)]
    pub adam_beta2: Option<f64>,
    #[arg(long)]
    pub adam_epsilon: Option<f64>,
}

impl ExperimentArgs {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_entries(&read_key_values(path)?)?;
        }
        macro_rules! take {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { $target = v; })*
            };
        }
        take!(
            problem => cfg.problem,
            optimizer => cfg.optimizer,
            alpha0 => cfg.alpha0,
            gamma => cfg.gamma,
            beta => cfg.beta,
            batch => cfg.batch,
            iters => cfg.iters,
            seed => cfg.seed,
            hidden_width => cfg.hidden_width,
            out => cfg.out_dir,
            dim => cfg.dim,
            sigma => cfg.sigma,
            noise_mv => cfg.noise_mv,
            adam_beta1 => cfg.adam.beta1,
            adam_beta2 => cfg.adam.beta2,
            adam_epsilon => cfg.adam.epsilon,
        );
        if let Some(d) = &self.data {
            cfg.data_path = Some(d.clone());
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct VarianceArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Iteration indices to report, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    pub k: Vec<u64>,
    #[arg(long, default_value_t = 1000)]
    pub replicas: usize,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// File of key=v1,v2,... lines; omitted means the base config only
    #[arg(long)]
    pub grid: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Run CSV files
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// SVG file to create
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub log_y: bool,
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    #[arg(long, hide = true)]
    pub corrupt_decay_factor: bool,
}

/// Runs a parsed command; `Ok(false)` means checks failed.
pub fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(a) => cmd_run(&a.resolve()?).map(|_| true),
        Command::Variance(a) => {
            let req = VarianceRequest {
                config: a.experiment.resolve()?,
                ks: a.k,
                replicas: a.replicas,
            };
            cmd_variance(&req).map(|_| true)
        }
        Command::Sweep(a) => {
            let base = a.experiment.resolve()?;
            let grid = match &a.grid {
                Some(p) => read_grid(p)?,
                None => Grid::new(),
            };
            cmd_sweep(&base, &grid).map(|_| true)
        }
        Command::Plot(a) => cmd_plot(&a.inputs, &a.out, a.log_y).map(|_| true),
        Command::Check(a) => Ok(cmd_check(a.corrupt_decay_factor)),
    }
}

/// Entry point behind the binary; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
