//! Command-line interface.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ccglasso", version, about = "Conditional censored graphical lasso")]
pub struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit at a single (lambda, rho).
    Fit(FitArgs),
    /// Fit a grid of penalties and select by BIC.
    Path(PathArgs),
    /// Draw a synthetic censored dataset.
    Simulate(SimulateArgs),
    /// Compare the EM estimator with the impute-at-the-bound baseline.
    Bench(BenchArgs),
    /// Moments of a truncated multivariate normal.
    Moments(MomentsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Em,
    Impute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MomentModeArg {
    Approx,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BicArg {
    Approx,
    Exact,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Response table (CSV with header; `NA`-free).
    #[arg(long)]
    pub responses: PathBuf,
    /// Predictor table (CSV with header).
    #[arg(long)]
    pub predictors: PathBuf,
    /// Lower detection bound: a number or a file with one value per column.
    #[arg(long, allow_hyphen_values = true)]
    pub lower: Option<String>,
    /// Upper detection bound: a number or a file with one value per column.
    #[arg(long, allow_hyphen_values = true)]
    pub upper: Option<String>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Em)]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value_t = MomentModeArg::Approx)]
    pub moment_mode: MomentModeArg,
    /// Monte Carlo draws per row in `mc` mode.
    #[arg(long, default_value_t = 10_000)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Relative change of Q that stops the EM iterations.
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, conflicts_with = "lambda_max", required_unless_present = "lambda_max")]
    pub lambda: Option<f64>,
    /// Use the smallest lambda that zeroes every slope.
    #[arg(long)]
    pub lambda_max: bool,
    #[arg(long, conflicts_with = "rho_max", required_unless_present = "rho_max")]
    pub rho: Option<f64>,
    /// Use the smallest rho that makes the precision matrix diagonal.
    #[arg(long)]
    pub rho_max: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PathArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 10)]
    pub n_lambda: usize,
    #[arg(long, default_value_t = 10)]
    pub n_rho: usize,
    /// Smallest penalty as a fraction of its maximum.
    #[arg(long, default_value_t = 0.1)]
    pub min_ratio: f64,
    #[arg(long, value_enum, default_value_t = BicArg::Approx)]
    pub bic: BicArg,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario file (JSON or TOML); flags below override its fields.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long)]
    pub censor_fraction: Option<f64>,
    #[arg(long)]
    pub target_pi: Option<f64>,
    #[arg(long)]
    pub u: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Replicate index of the drawn dataset.
    #[arg(long, default_value_t = 0)]
    pub replicate: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Desk-scale study: n = 100, p = q = 50, 20 replicates.
    #[arg(long)]
    pub full: bool,
    /// Points along each swept penalty.
    #[arg(long, default_value_t = 10)]
    pub n_path: usize,
    #[arg(long, default_value_t = 0.1)]
    pub min_ratio: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct MomentsArgs {
    /// Comma-separated mean vector.
    #[arg(long, allow_hyphen_values = true)]
    pub mean: String,
    /// Comma-separated covariance, row-major.
    #[arg(long, allow_hyphen_values = true)]
    pub cov: String,
    /// Comma-separated lower limits (`-inf` allowed).
    #[arg(long, allow_hyphen_values = true)]
    pub lower: String,
    /// Comma-separated upper limits (`inf` allowed).
    #[arg(long, allow_hyphen_values = true)]
    pub upper: String,
    #[arg(long, value_enum, default_value_t = MomentModeArg::Approx)]
    pub moment_mode: MomentModeArg,
    #[arg(long, default_value_t = 100_000)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write `moments.json` here instead of standard output.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_NOT_CONVERGED: u8 = 2;

pub fn run() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_FAILURE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_FAILURE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    }
    let res = match &cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Path(a) => commands::path(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Bench(a) => commands::bench(a),
        Command::Moments(a) => commands::moments(a),
    };
    match res {
        Ok(true) => ExitCode::from(EXIT_OK),
        Ok(false) => ExitCode::from(EXIT_NOT_CONVERGED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
