mod commands;
mod config;
mod staging;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mbmm::regression::PointEstimate;

use crate::commands::Failure;
use crate::config::RunConfig;

/// Bayesian multivariate Bernoulli mixture profiling.
///
/// Exit codes: 0 success, 1 invalid input or configuration, 2 computation
/// failure, 3 verification failure.
#[derive(Debug, Parser)]
#[command(name = "mbmm", version, about)]
struct Cli {
    /// TOML (or .json) run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Top-level seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dichotomize a raw indicator table.
    Binarize(BinarizeArgs),
    /// Run the sampler and the post-processing chain.
    Fit(FitArgs),
    /// Logistic regression of a patient outcome on profile membership.
    Regress(RegressArgs),
    /// Run the built-in correctness checks.
    Verify(VerifyArgs),
    /// Attach profile assignments to GeoJSON features.
    ExportGeojson(ExportArgs),
}

#[derive(Debug, Default, Args)]
struct TableArgs {
    /// Column holding unit ids (default: first column).
    #[arg(long)]
    id_column: Option<String>,
    #[arg(long)]
    delimiter: Option<char>,
}

#[derive(Debug, Args)]
struct BinarizeArgs {
    /// Raw indicator table.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    table: TableArgs,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Binary 0/1/NA matrix.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Raw table to binarize first (ignored when --input is given).
    #[arg(long)]
    raw: Option<PathBuf>,
    #[command(flatten)]
    table: TableArgs,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    delta_t: Option<f64>,
    #[arg(long)]
    k_max: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Report this many profiles instead of the posterior mode.
    #[arg(long)]
    k_map: Option<usize>,
    #[arg(long)]
    min_profile_fraction: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PointArg {
    Mean,
    Median,
}

#[derive(Debug, Args)]
struct RegressArgs {
    #[arg(long)]
    patients: Option<PathBuf>,
    /// assignments.csv from `fit` (default: in the output directory).
    #[arg(long)]
    assignments: Option<PathBuf>,
    /// 1-based reference profile.
    #[arg(long)]
    reference_profile: Option<usize>,
    /// Point estimate on the odds scale.
    #[arg(long, value_enum)]
    point: Option<PointArg>,
    #[arg(long)]
    prior_sd: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Sub-minute subset.
    #[arg(long)]
    quick: bool,
    /// Also write the report as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// profile_summary.json from `fit` (default: in the output directory).
    #[arg(long)]
    summary: Option<PathBuf>,
    #[arg(long)]
    geojson: Option<PathBuf>,
    /// Feature property matching the unit ids.
    #[arg(long)]
    key: Option<String>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn apply_table(config: &mut RunConfig, t: TableArgs) {
    if t.id_column.is_some() {
        config.table.id_column = t.id_column;
    }
    set(&mut config.table.delimiter, t.delimiter);
}

fn build_config(cli: &mut Cli) -> anyhow::Result<RunConfig> {
    let mut c = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    set(&mut c.output_dir, cli.output_dir.take());
    set(&mut c.seed, cli.seed);
    match &mut cli.command {
        Command::Binarize(a) => {
            if a.input.is_some() {
                c.input.raw_table = a.input.take();
            }
            apply_table(&mut c, std::mem::take(&mut a.table));
        }
        Command::Fit(a) => {
            if a.input.is_some() {
                c.input.binary_matrix = a.input.take();
            } else if a.raw.is_some() {
                c.input.binary_matrix = None;
                c.input.raw_table = a.raw.take();
            }
            apply_table(&mut c, std::mem::take(&mut a.table));
            set(&mut c.mcmc.n_chains, a.chains);
            set(&mut c.mcmc.n_iterations, a.iterations);
            set(&mut c.mcmc.burn_in_iterations, a.burn_in);
            set(&mut c.mcmc.thin, a.thin);
            set(&mut c.mcmc.delta_t, a.delta_t);
            set(&mut c.priors.k_max, a.k_max);
            set(&mut c.mcmc.threads, a.threads);
            set(&mut c.postprocess.min_profile_fraction, a.min_profile_fraction);
            if a.k_map.is_some() {
                c.postprocess.k_override = a.k_map;
            }
        }
        Command::Regress(a) => {
            if a.patients.is_some() {
                c.input.patients = a.patients.take();
            }
            if a.assignments.is_some() {
                c.input.assignments = a.assignments.take();
            }
            set(&mut c.regression.reference_profile, a.reference_profile);
            set(
                &mut c.regression.point,
                a.point.map(|p| match p {
                    PointArg::Mean => PointEstimate::Mean,
                    PointArg::Median => PointEstimate::Median,
                }),
            );
            set(&mut c.regression.prior_sd, a.prior_sd);
            set(&mut c.regression.mcmc.n_iterations, a.iterations);
            set(&mut c.regression.mcmc.burn_in_iterations, a.burn_in);
            set(&mut c.regression.mcmc.thin, a.thin);
        }
        Command::Verify(_) => {}
        Command::ExportGeojson(a) => {
            if a.summary.is_some() {
                c.input.profile_summary = a.summary.take();
            }
            if a.geojson.is_some() {
                c.input.geojson = a.geojson.take();
            }
            set(&mut c.geojson.key_property, a.key.take());
        }
    }
    c.resolve()
}

fn run(mut cli: Cli) -> Result<(), Failure> {
    let config = build_config(&mut cli).map_err(Failure::Validation)?;
    match &cli.command {
        Command::Binarize(_) => commands::cmd_binarize(&config),
        Command::Fit(_) => commands::cmd_fit(&config),
        Command::Regress(_) => commands::cmd_regress(&config),
        Command::Verify(a) => commands::cmd_verify(&config, a.quick, a.report.as_deref()),
        Command::ExportGeojson(_) => commands::cmd_export_geojson(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
