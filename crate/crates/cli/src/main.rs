//! `anticipation` command-line pipeline: synthesize or ingest hourly view
//! series, fit the peak model and baselines, forecast, cluster, classify
//! match outcomes, decompose circadian rhythms and aggregate a report.

mod artifacts;
mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use error::{CliResult, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "anticipation", version, about = "Anticipation/response peak model pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus (manifest, series cache, ground truth).
    Synth(SynthArgs),
    /// Build the 21-day series cache from pageview dumps or per-event files.
    Ingest(IngestArgs),
    /// Fit the peak model and the baselines to every cached event.
    Fit(FitArgs),
    /// Forecast the response after `t_obs` hours and score the forecasts.
    Predict(PredictArgs),
    /// Cluster events by fitted parameters and compare with categories.
    Cluster(ClusterArgs),
    /// Cross-validated inference of football match results.
    Classify(ClassifyArgs),
    /// Split each fitted circadian rhythm into regional components.
    Decompose(DecomposeArgs),
    /// Collect the summaries written by the other commands.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    /// Five categories with distinct parameter distributions.
    Categories,
    /// Football matches with results; `--n-events` counts matches.
    Football,
    /// One category with peaks around 5,000 views/hour.
    HighVolume,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "categories")]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 500)]
    pub n_events: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["series_dir", "dump_dir"])))]
pub struct IngestArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory of `<event id>.csv` files with `utc_hour,views` rows.
    #[arg(long)]
    pub series_dir: Option<PathBuf>,
    /// Directory of hourly pageview dump files (optionally gzipped).
    #[arg(long)]
    pub dump_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Events are kept when their peak exceeds this many views/hour.
    #[arg(long, default_value_t = anticipation::ingest::POPULARITY_THRESHOLD)]
    pub threshold: u64,
    #[arg(long, default_value = "en")]
    pub project: String,
}

/// Location of the cached corpus; defaults to the output directory.
#[derive(Debug, Args, Serialize)]
pub struct DataArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Defaults to `<out>/manifest.csv`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Defaults to `<out>/series`.
    #[arg(long)]
    pub series_dir: Option<PathBuf>,
}

impl DataArgs {
    pub fn manifest(&self) -> PathBuf {
        self.manifest.clone().unwrap_or_else(|| self.out.join("manifest.csv"))
    }

    pub fn series_dir(&self) -> PathBuf {
        self.series_dir.clone().unwrap_or_else(|| self.out.join("series"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    Proposed,
    Spikem,
    Powerlaw,
    All,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "all")]
    pub method: FitMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Proposed,
    Spikem,
    Powerlaw,
    Lr,
    All,
}

#[derive(Debug, Clone, Copy, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PriorArg {
    None,
    Anticipation,
    AnticipationCategory,
}

#[derive(Debug, Clone, Copy, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ScaleArg {
    Log,
    Raw,
}

fn parse_t_obs(s: &str) -> Result<usize, String> {
    match s {
        "24" | "48" | "72" => Ok(s.parse().unwrap()),
        _ => Err("must be one of 24, 48, 72".into()),
    }
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Hours after the peak that are observed.
    #[arg(long, default_value = "24", value_parser = parse_t_obs)]
    pub t_obs: usize,
    #[arg(long, default_value_t = anticipation::predict::HORIZON_HOURS)]
    pub horizon: usize,
    #[arg(long, value_enum, default_value = "all")]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value = "anticipation-category")]
    pub prior: PriorArg,
    /// Scale of the anticipation regressor in the prior location.
    #[arg(long, value_enum, default_value = "log")]
    pub scale: ScaleArg,
    /// Folds used to learn priors and the LR table from other events.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SourceArg {
    Proposed,
    Spikem,
    Powerlaw,
    Fraction,
    All,
}

#[derive(Debug, Args, Serialize)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "all")]
    pub features: SourceArg,
    #[arg(long, default_value_t = 1)]
    pub k_min: usize,
    #[arg(long, default_value_t = 12)]
    pub k_max: usize,
    /// Mixture fits per K when choosing K by BIC.
    #[arg(long, default_value_t = 10)]
    pub selection_restarts: usize,
    /// Mixture fits at the chosen K scored against the categories.
    #[arg(long, default_value_t = 20)]
    pub restarts: usize,
    /// Encode the circadian offset as (cos, sin) instead of hours.
    #[arg(long)]
    pub circular_phase: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSetArg {
    ResponseOpponent,
    Response,
    SpikemOpponent,
    Powerlaw,
    Fraction,
    All,
}

#[derive(Debug, Args, Serialize)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "all")]
    pub feature_set: FeatureSetArg,
    /// Fixed SVM regularization constant.
    #[arg(long, default_value_t = anticipation::classify::DEFAULT_C, conflicts_with = "c_grid")]
    pub c: f64,
    /// Choose C per fold by inner cross-validation over 0.001..10.
    #[arg(long)]
    pub c_grid: bool,
    #[arg(long, default_value_t = anticipation::classify::DEFAULT_FOLDS)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long)]
    pub out: PathBuf,
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(a) => commands::synth::run(&a),
        Command::Ingest(a) => commands::ingest::run(&a),
        Command::Fit(a) => commands::fit::run(&a),
        Command::Predict(a) => commands::predict::run(&a),
        Command::Cluster(a) => commands::cluster::run(&a),
        Command::Classify(a) => commands::classify::run(&a),
        Command::Decompose(a) => commands::decompose::run(&a),
        Command::Report(a) => commands::report::run(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE as u8),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
