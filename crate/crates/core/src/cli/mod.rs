//! Command-line front end: ingestion, run configuration, weight export and
//! report emission.

pub mod commands;
pub mod ingest;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::calibration::{EstimatorKind, SingularityPolicy};
use crate::error::Error;
use crate::simulation::{SweepAxis, SyntheticSpec};
use crate::varsampling::Sampler;

pub use commands::{cmd_estimate, cmd_pca, cmd_simulate, cmd_sweep, cmd_weights};
pub use ingest::{ingest_csv, Dataset, Diagnostics};

/// Environment variable read for the default output directory.
pub const OUT_DIR_ENV: &str = "PCBAG_OUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("line {line}, column {column}: {message}")]
    Parse { line: u64, column: usize, message: String },
    #[error("line {line}, column {column}: non-numeric value `{value}`")]
    NonNumericCell { line: u64, column: usize, value: String },
    #[error("duplicate unit id `{id}`")]
    DuplicateUnitId { id: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Config(String),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Parse { .. } => "cli.parse_error",
            CliError::NonNumericCell { .. } => "cli.non_numeric_cell",
            CliError::DuplicateUnitId { .. } => "cli.duplicate_unit_id",
            CliError::Io { .. } => "cli.io",
            CliError::Config(_) => "config.invalid",
            CliError::Core(e) => e.code(),
        }
    }

    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    /// `error[code]: message` on a single line.
    pub fn render(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error[{}]: {}", self.code(), msg)
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Core(Error::InvalidConfig(msg.into()))
}

#[derive(Debug, Parser)]
#[command(name = "pcbag", version, about = "Bagged calibration on sampled principal components")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenvalues and explained variance of the auxiliary variables.
    Pca(RunArgs),
    /// Calibrated weights for a sample.
    Weights(RunArgs),
    /// Estimated totals per response and estimator.
    Estimate(RunArgs),
    /// Monte Carlo study on a population file or the synthetic population.
    Simulate(RunArgs),
    /// Repeated studies over a grid of c or alpha values.
    Sweep(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Sample (weights, estimate) or population (pca, simulate) CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Population frame with the auxiliary variables of every unit.
    #[arg(long)]
    pub population: Option<PathBuf>,
    /// Known auxiliary totals (`name,total` rows, plus `N`).
    #[arg(long)]
    pub totals: Option<PathBuf>,
    /// TOML file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Bagging iterations.
    #[arg(long = "B", value_name = "B")]
    pub iterations: Option<usize>,
    /// Components (or variables) per calibration.
    #[arg(long)]
    pub c: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Sample size per simulation run.
    #[arg(long)]
    pub n: Option<usize>,
    /// Simulation runs I.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Comma-separated list of CAL, PCA, BAG, BAG+PCA, HT.
    #[arg(long, value_delimiter = ',')]
    pub estimators: Option<Vec<EstimatorKind>>,
    /// Auxiliary columns reproduced exactly by BAG+PCA.
    #[arg(long = "exact-vars", value_delimiter = ',')]
    pub exact_vars: Option<Vec<String>>,
    #[arg(long)]
    pub sampler: Option<Sampler>,
    #[arg(long)]
    pub singularity: Option<SingularityPolicy>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long = "out-dir")]
    pub out_dir: Option<PathBuf>,
    /// Sweep axis: c or alpha.
    #[arg(long)]
    pub axis: Option<SweepAxis>,
    /// Comma-separated sweep values.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    input: Option<PathBuf>,
    population: Option<PathBuf>,
    totals: Option<PathBuf>,
    seed: Option<u64>,
    #[serde(rename = "B")]
    iterations: Option<usize>,
    c: Option<usize>,
    alpha: Option<f64>,
    n: Option<usize>,
    runs: Option<usize>,
    estimators: Option<Vec<EstimatorKind>>,
    exact_vars: Option<Vec<String>>,
    sampler: Option<Sampler>,
    singularity: Option<SingularityPolicy>,
    threads: Option<usize>,
    out_dir: Option<PathBuf>,
    axis: Option<SweepAxis>,
    grid: Option<Vec<f64>>,
    synthetic: Option<SyntheticSpec>,
}

/// Flags merged over the config file. Command-specific defaults are filled
/// in by the commands, which echo them in their output.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub population: Option<PathBuf>,
    pub totals: Option<PathBuf>,
    pub seed: Option<u64>,
    pub iterations: Option<usize>,
    pub c: Option<usize>,
    pub alpha: Option<f64>,
    pub n: Option<usize>,
    pub runs: Option<usize>,
    pub estimators: Option<Vec<EstimatorKind>>,
    pub exact_vars: Vec<String>,
    pub sampler: Option<Sampler>,
    pub singularity: Option<SingularityPolicy>,
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
    pub axis: Option<SweepAxis>,
    pub grid: Option<Vec<f64>>,
    pub synthetic: Option<SyntheticSpec>,
}

impl RunConfig {
    pub fn from_args(args: &RunArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                toml::from_str::<FileConfig>(&text)
                    .map_err(|e| invalid(format!("{}: {}", path.display(), e.message())))?
            }
            None => FileConfig::default(),
        };
        let out_dir = args
            .out_dir
            .clone()
            .or(file.out_dir)
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        let cfg = Self {
            input: args.input.clone().or(file.input),
            population: args.population.clone().or(file.population),
            totals: args.totals.clone().or(file.totals),
            seed: args.seed.or(file.seed),
            iterations: args.iterations.or(file.iterations),
            c: args.c.or(file.c),
            alpha: args.alpha.or(file.alpha),
            n: args.n.or(file.n),
            runs: args.runs.or(file.runs),
            estimators: args.estimators.clone().or(file.estimators),
            exact_vars: args.exact_vars.clone().or(file.exact_vars).unwrap_or_default(),
            sampler: args.sampler.or(file.sampler),
            singularity: args.singularity.or(file.singularity),
            threads: args.threads.or(file.threads),
            out_dir,
            axis: args.axis.or(file.axis),
            grid: args.grid.clone().or(file.grid),
            synthetic: file.synthetic,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that do not depend on the data.
    fn validate(&self) -> Result<(), CliError> {
        if self.iterations == Some(0) {
            return Err(Error::out_of_range("B", 0.0, "need at least one iteration").into());
        }
        if self.c == Some(0) {
            return Err(Error::out_of_range("c", 0.0, "must be positive").into());
        }
        if let Some(a) = self.alpha {
            if !(a.is_finite() && a >= 0.0) {
                return Err(Error::out_of_range("alpha", a, "must be finite and nonnegative").into());
            }
        }
        if let Some(n) = self.n {
            if n < 2 {
                return Err(Error::out_of_range("n", n as f64, "need at least 2").into());
            }
        }
        if self.threads == Some(0) {
            return Err(invalid("--threads must be at least 1"));
        }
        if matches!(&self.estimators, Some(v) if v.is_empty()) {
            return Err(invalid("no estimators requested"));
        }
        Ok(())
    }
}

/// Runs a parsed command and returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let (args, f): (&RunArgs, fn(&RunConfig) -> Result<Vec<PathBuf>, CliError>) = match &cli.command {
        Command::Pca(a) => (a, cmd_pca),
        Command::Weights(a) => (a, cmd_weights),
        Command::Estimate(a) => (a, cmd_estimate),
        Command::Simulate(a) => (a, cmd_simulate),
        Command::Sweep(a) => (a, cmd_sweep),
    };
    let cfg = RunConfig::from_args(args)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| CliError::io(&cfg.out_dir, e))?;
    match cfg.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| invalid(format!("thread pool: {e}")))?;
            pool.install(|| f(&cfg))
        }
        None => f(&cfg),
    }
}

/// Parses `argv`-style arguments and runs the command.
pub fn run_from<I, T>(argv: I) -> Result<Vec<PathBuf>, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| invalid(e.to_string().lines().next().unwrap_or("").to_string()))?;
    run(&cli)
}
