mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "ocbic", version, about = "Order-constrained BIC for linear and logistic models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Tsv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    /// Prior centered on the constraint boundary.
    Lui,
    /// Prior centered at the estimate.
    Ui,
    /// Boundary-centered prior keeping the prior-fit term.
    LuiFull,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    Qmc,
    Mc,
}

#[derive(Debug, Args)]
pub struct EngineArgs {
    /// Seed for every random stream.
    #[arg(long, default_value_t = 20190101)]
    pub seed: u64,
    /// Lattice points per randomization.
    #[arg(long, default_value_t = 1 << 14)]
    pub points: usize,
    /// Independent lattice randomizations.
    #[arg(long, default_value_t = 12)]
    pub randomizations: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a linear or logistic model to CSV data and write the fit as JSON.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        outcome: String,
        /// Comma-separated predictor columns.
        #[arg(long, value_delimiter = ',', required = true)]
        predictors: Vec<String>,
        #[arg(long, default_value = "gaussian")]
        family: String,
        /// z-score predictors before fitting.
        #[arg(long)]
        standardize: bool,
        #[arg(long)]
        no_intercept: bool,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Criterion for one fitted model under order constraints.
    Eval {
        #[arg(long)]
        fit: PathBuf,
        /// Constraint string, e.g. "x2 > x1 > 0". Repeatable.
        #[arg(long = "constraint")]
        constraints: Vec<String>,
        /// Evaluate the complement of the union of the constraint sets.
        #[arg(long)]
        complement: bool,
        #[arg(long, value_enum, default_value = "lui")]
        variant: VariantArg,
        /// Fit of the null model, for --variant lui-full.
        #[arg(long)]
        null_fit: Option<PathBuf>,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, value_enum, default_value = "tsv")]
        format: Format,
    },
    /// Compare models listed in a JSON spec file.
    Compare {
        /// JSON model list: [{label, fit_path | bic_override, constraints, complement}].
        spec: PathBuf,
        /// Comma-separated prior model probabilities; uniform when omitted.
        #[arg(long, value_delimiter = ',')]
        prior_probs: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value = "lui")]
        variant: VariantArg,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, value_enum, default_value = "tsv")]
        format: Format,
    },
    /// Probability that a normal vector is positive in every coordinate.
    Orthant {
        /// Comma-separated mean.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        mean: Vec<f64>,
        /// Covariance rows separated by ';', entries by ','.
        #[arg(long, allow_hyphen_values = true)]
        cov: String,
        #[arg(long, value_enum, default_value = "qmc")]
        method: EngineArg,
        /// Draws for --method mc.
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, value_enum, default_value = "tsv")]
        format: Format,
    },
    /// Run one of the built-in experiments.
    Simulate {
        /// fig2, fig3 or fig4.
        experiment: String,
        /// Comma-separated sample sizes.
        #[arg(long = "n", value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
        /// Comma-separated effect multipliers.
        #[arg(long = "a", value_delimiter = ',', allow_hyphen_values = true)]
        a_grid: Option<Vec<f64>>,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        randomizations: Option<usize>,
        /// Draws per marginal likelihood (fig4).
        #[arg(long)]
        oracle_draws: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "tsv")]
        format: Format,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit { data, outcome, predictors, family, standardize, no_intercept, out } => {
            commands::fit(&data, &outcome, &predictors, &family, standardize, !no_intercept, out.as_deref())
        }
        Command::Eval { fit, constraints, complement, variant, null_fit, engine, format } => {
            commands::eval(&fit, &constraints, complement, variant, null_fit.as_deref(), &engine, format)
        }
        Command::Compare { spec, prior_probs, variant, engine, format } => {
            commands::compare(&spec, prior_probs.as_deref(), variant, &engine, format)
        }
        Command::Orthant { mean, cov, method, samples, engine, format } => {
            commands::orthant(&mean, &cov, method, samples, &engine, format)
        }
        Command::Simulate { experiment, n_grid, a_grid, replications, seed, points, randomizations, oracle_draws, out, format } => {
            let mut config = ocbic::SimConfig::for_experiment(experiment.parse()?);
            if let Some(v) = n_grid {
                config.n_grid = v;
            }
            if let Some(v) = a_grid {
                config.a_grid = v;
            }
            if let Some(v) = replications {
                config.replications = v;
            }
            if let Some(v) = seed {
                config.seed = v;
                config.qmc.seed = v;
            }
            if let Some(v) = points {
                config.qmc.points = v;
            }
            if let Some(v) = randomizations {
                config.qmc.randomizations = v;
            }
            if let Some(v) = oracle_draws {
                config.oracle_draws = v;
            }
            config.output = out;
            commands::simulate(&config, format)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
