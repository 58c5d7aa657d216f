use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use classmix_core::pipeline::DEFAULT_MIN_EPOCH;
use classmix_core::SamplerKind;

mod artifacts;
mod commands;

#[derive(Parser)]
#[command(name = "classmix", version, about = "Per-class training set designs and scaling-law fits")]
struct Cli {
    /// Drop records logged before this epoch
    #[arg(long, global = true, default_value_t = DEFAULT_MIN_EPOCH)]
    min_epoch: u32,

    /// More log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate maximin designs over per-class counts
    Design(DesignArgs),
    /// Simulate training logs for a directory of designs
    Simulate(SimulateArgs),
    /// Fit a scaling-law model and score it on a test log
    Fit(FitArgs),
    /// Forward feature selection for the arctan regression model
    Select(SelectArgs),
    /// Comparison table and plots for a directory of results
    Report(ReportArgs),
    /// Predict accuracy for a hypothetical allocation
    Predict(PredictArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Sampler {
    Auto,
    Simplex,
    CappedWalk,
}

impl From<Sampler> for SamplerKind {
    fn from(s: Sampler) -> Self {
        match s {
            Sampler::Auto => SamplerKind::Auto,
            Sampler::Simplex => SamplerKind::Simplex,
            Sampler::CappedWalk => SamplerKind::CappedWalk,
        }
    }
}

#[derive(Args)]
struct DesignArgs {
    #[arg(long)]
    classes: usize,
    /// One or more subset sizes, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    subset_size: Vec<u64>,
    /// Images available per class
    #[arg(long)]
    cap: u64,
    #[arg(long)]
    rows: usize,
    #[arg(long, default_value_t = 0)]
    opt_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    candidate_batch: usize,
    #[arg(long, value_enum, default_value_t = Sampler::Auto)]
    sampler: Sampler,
    /// Output directory, or a .csv path when a single size is given
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Directory of design CSVs with their JSON sidecars
    #[arg(long)]
    designs: PathBuf,
    #[arg(long)]
    oracle: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Model spec or template JSON
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Fitting options JSON
    #[arg(long)]
    config: Option<PathBuf>,
    /// Forward test: fit below this quantile of the training totals
    #[arg(long, default_value_t = 0.7, conflicts_with = "forward_at_most")]
    forward_quantile: f64,
    /// Forward test: fit on scaled totals at or below this value
    #[arg(long)]
    forward_at_most: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Minimum RSS reduction for admitting a feature
    #[arg(long, default_value_t = 0.1)]
    stop: f64,
    #[arg(long, default_value_t = classmix_core::selection::MAX_FEATURES)]
    max_features: usize,
    /// Restrict candidates to these names (default: all mains and pairs)
    #[arg(long, value_delimiter = ',')]
    candidates: Vec<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Result JSON written by fit or select
    #[arg(long)]
    model: PathBuf,
    /// Images per class, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    counts: Vec<u64>,
    #[arg(long)]
    epoch: u32,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match cli.command {
        Command::Design(a) => commands::design(a),
        Command::Simulate(a) => commands::simulate(a, cli.min_epoch),
        Command::Fit(a) => commands::fit(a, cli.min_epoch),
        Command::Select(a) => commands::select(a, cli.min_epoch),
        Command::Report(a) => commands::report(a, cli.min_epoch),
        Command::Predict(a) => commands::predict(a, cli.min_epoch),
    }
}
