//! Command-line front end for `lsldg-core`: synthetic data, model fitting and
//! scoring, mode-seeking clustering, and the repeated-run experiment harness.
//!
//! Exit codes: `0` success, `1` usage or configuration error, `2` numerical failure.

pub mod commands;
pub mod config;
mod error;
pub mod experiment;
mod plot;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "lsldg", version, about = "Least-squares log-density gradient estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset and write it as CSV.
    Generate(GenerateArgs),
    /// Cross-validate hyperparameters and write the fitted model.
    Fit(FitArgs),
    /// Held-out score of a model file on a dataset.
    Score(ScoreArgs),
    /// Mode-seeking clustering of a dataset.
    Cluster(ClusterArgs),
    /// Repeated train/test runs with summary tables and plots.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Input CSV, one sample per row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// The input CSV has a header row.
    #[arg(long)]
    pub header: bool,
    /// Standardize columns to mean 0 and sample standard deviation 1.
    #[arg(long)]
    pub standardize: bool,
    /// Synthetic family, used when no CSV is given.
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long = "dim")]
    pub d: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub data_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SelectArgs {
    /// analytic | bcd
    #[arg(long)]
    pub solver: Option<String>,
    /// Number of cross-validation folds.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Seed for centers and folds.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Maximum number of kernel centers.
    #[arg(long)]
    pub b_max: Option<usize>,
    /// Grid preset: gradient | clustering.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    /// Multi-task weights; `inf` is the shared-parameter limit.
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
    #[arg(long)]
    pub bcd_tol: Option<f64>,
    #[arg(long)]
    pub bcd_max_sweeps: Option<usize>,
    /// kernel: grid `λ`, `γ` are divided by `σ⁴` before solving;
    /// coefficient: used as given. Defaults to kernel for the gradient
    /// preset and coefficient for the clustering preset.
    #[arg(long)]
    pub penalty_units: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SeekArgs {
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub step_tol: Option<f64>,
    #[arg(long)]
    pub merge_radius: Option<f64>,
    #[arg(long)]
    pub denominator_floor: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long = "dim")]
    pub d: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV; a `<out>.meta.toml` provenance file is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the mixture component of every sample.
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub select: SelectArgs,
    /// mt | s | c
    #[arg(long)]
    pub method: Option<String>,
    /// Model file to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CV table to write; defaults to `<out>.cv.csv`.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model file written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Standardization written by `fit --standardize`, applied to the data first.
    #[arg(long)]
    pub transform: Option<PathBuf>,
    /// Output CSV; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub select: SelectArgs,
    #[command(flatten)]
    pub seek: SeekArgs,
    /// mtlsldgc | slsldgc | clsldgc | meanshift
    #[arg(long)]
    pub method: Option<String>,
    /// Ground-truth labels, one integer per row, for the adjusted Rand index.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Mean-shift bandwidth candidates.
    #[arg(long, value_delimiter = ',')]
    pub bandwidths: Option<Vec<f64>>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// gradient | clustering
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub dims: Option<Vec<usize>>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// `--seed` is the base seed: repetition `r` uses `seed + r` for data,
    /// centers and folds.
    #[command(flatten)]
    pub select: SelectArgs,
    #[command(flatten)]
    pub seek: SeekArgs,
    #[arg(long, value_delimiter = ',')]
    pub bandwidths: Option<Vec<f64>>,
    /// Skip standard errors (required when repetitions = 1).
    #[arg(long)]
    pub no_standard_errors: bool,
    #[arg(long)]
    pub no_plot: bool,
    /// Worker threads; defaults to all cores. Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::usage(e.render().to_string())),
    };
    match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Score(a) => commands::score(&a),
        Command::Cluster(a) => commands::cluster(&a),
        Command::Experiment(a) => experiment::cmd_experiment(&a),
    }
}
