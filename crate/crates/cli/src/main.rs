use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use sensilab::metrics::MetricSpec;
use sensilab::systems::MapSpec;

mod commands;
mod config;
mod output;

use config::{ConfigError, FloatList};

/// Experiments on sensitivity of measure-preserving interval maps.
///
/// Every setting can also come from a flat `key = value` file given with
/// `--config`; keys match the long flag names and flags win over file keys.
/// Each run writes one JSON-lines report and one CSV with the columns
/// map, metric, N, delta, center, fraction, half_width, samples, seed.
///
/// Exit status: 0 on success, 2 on a configuration error, 3 when a point runs
/// out of precision.
#[derive(Parser, Debug)]
#[command(name = "sensilab", version, about, long_about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Flat key = value file; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Base seed [default: $SENSILAB_SEED, else 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads. Changes wall time only, never output.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Lower bound on point precision in bits [default: 64].
    #[arg(long)]
    pub min_precision: Option<u32>,
    /// JSON-lines report path [default: sensilab-<command>.jsonl].
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// CSV path [default: sensilab-<command>.csv].
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dump an orbit table.
    Orbit(OrbitArgs),
    /// Check metric axioms and Lipschitz/isometry defects.
    MetricCheck(MetricCheckArgs),
    /// Look for balls of zero measure.
    Scan(ScanArgs),
    /// Per-center separation fractions and a trapped-set measure.
    Sensitivity(SensitivityArgs),
    /// Pairwise separation and its agreement with the per-center estimate.
    Pairwise(PairwiseArgs),
    /// Sensitive versus isometry-like verdict.
    Classify(ClassifyArgs),
}

#[derive(Args, Debug)]
pub struct OrbitArgs {
    #[command(flatten)]
    pub common: Common,
    /// Map, e.g. radic:2, tent, identity, rotation:golden, rotation:sqrt(2).
    #[arg(long)]
    pub map: Option<MapSpec>,
    /// Starting point: p/q, a decimal, 0xHEX or 0xHEX@BITS.
    #[arg(long)]
    pub x: Option<String>,
    /// Number of iterations [default: 20].
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Args, Debug)]
pub struct MetricCheckArgs {
    #[command(flatten)]
    pub common: Common,
    /// Metric, e.g. euclidean, circle, power:0.5, derived(euclidean; radic:2; N=50).
    #[arg(long)]
    pub metric: Option<MetricSpec>,
    /// Map for the Lipschitz and isometry checks [default: the derived metric's map, else identity].
    #[arg(long)]
    pub map: Option<MapSpec>,
    /// Random triples for the axiom check [default: 1000].
    #[arg(long)]
    pub trials: Option<usize>,
    /// Random pairs for the defect checks [default: 1000].
    #[arg(long)]
    pub pairs: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ScanArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub metric: Option<MetricSpec>,
    /// Comma-separated radii [default: 0.01,0.05,0.1,0.25,0.5].
    #[arg(long)]
    pub radii: Option<FloatList>,
    /// Centers, adversarial ones first [default: 20].
    #[arg(long)]
    pub centers: Option<usize>,
    /// Monte Carlo samples per ball [default: 10000].
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub map: Option<MapSpec>,
    /// Base metric [default: euclidean].
    #[arg(long)]
    pub metric: Option<MetricSpec>,
    /// Separation threshold [default: 0.4].
    #[arg(long)]
    pub delta: Option<f64>,
    /// Horizon N [default: 200].
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Number of centers [default: 20].
    #[arg(long)]
    pub centers: Option<usize>,
    /// Points y per center [default: 500].
    #[arg(long)]
    pub ys_per_center: Option<usize>,
    /// Put the map's adversarial centers first [default: true].
    #[arg(long, action = ArgAction::Set)]
    pub adversarial: Option<bool>,
    /// Center of the trapped-set estimate [default: 0].
    #[arg(long)]
    pub x: Option<String>,
    /// Samples for the trapped-set estimate [default: 10000].
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Args, Debug)]
pub struct PairwiseArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub map: Option<MapSpec>,
    /// Base metric [default: euclidean].
    #[arg(long)]
    pub metric: Option<MetricSpec>,
    /// Separation threshold, compared with >= [default: 0.4].
    #[arg(long)]
    pub delta: Option<f64>,
    /// Horizon N [default: 200].
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Independent pairs [default: 10000].
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Centers for the per-center comparison [default: 20].
    #[arg(long)]
    pub centers: Option<usize>,
    /// Points y per center for the comparison [default: 500].
    #[arg(long)]
    pub ys_per_center: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub map: Option<MapSpec>,
    /// Base metric [default: euclidean].
    #[arg(long)]
    pub metric: Option<MetricSpec>,
    /// Ascending comma-separated deltas [default: 0.1,0.2,...,0.9].
    #[arg(long)]
    pub delta_grid: Option<FloatList>,
    /// Horizon N [default: 200].
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Number of centers [default: 20].
    #[arg(long)]
    pub centers: Option<usize>,
    /// Points y per center [default: 500].
    #[arg(long)]
    pub ys_per_center: Option<usize>,
    /// Separation fraction a delta must reach [default: 0.99].
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Absolute tolerance on the derived-metric isometry defect [default: 2^-40].
    #[arg(long)]
    pub isometry_tolerance: Option<f64>,
    /// Pairs for the isometry defect [default: 2000].
    #[arg(long)]
    pub isometry_pairs: Option<usize>,
    /// Ball radius for the uniformity check [default: 0.1].
    #[arg(long)]
    pub uniformity_radius: Option<f64>,
    /// Centers for the uniformity check [default: 20].
    #[arg(long)]
    pub uniformity_centers: Option<usize>,
    /// Samples per ball for the uniformity check [default: 4000].
    #[arg(long)]
    pub uniformity_samples: Option<usize>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<sensilab::Error>() {
        return match e {
            sensilab::Error::PrecisionExhausted { .. } => 3,
            _ => 2,
        };
    }
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Orbit(a) => commands::orbit(a),
        Command::MetricCheck(a) => commands::metric_check(a),
        Command::Scan(a) => commands::scan(a),
        Command::Sensitivity(a) => commands::sensitivity(a),
        Command::Pairwise(a) => commands::pairwise(a),
        Command::Classify(a) => commands::classify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sensilab: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
