use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use matrank::penalty::PenaltyFamily;
use matrank::rank::MethodKind;
use matrank::sim::{ErrorDist, ModelName};
use matrank::video::FrameFormat;

mod commands;

/// Rank tests for the mean of matrix-valued data.
#[derive(Debug, Parser)]
#[command(name = "matrank", version)]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file, or output directory for `sparse-svd` and `fixture`.
    /// CSV goes to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo rejection rates for simulated models.
    Simulate(SimulateArgs),
    /// Sequential rank test on one sample set.
    Test(TestArgs),
    /// Sliding-window rank estimation over a frame sequence.
    RankScan(RankScanArgs),
    /// Sparse SVD of a mean matrix.
    SparseSvd(SparseSvdArgs),
    /// Writes the synthetic video fixture as PGM frames.
    Fixture(FixtureArgs),
}

#[derive(Debug, Args)]
struct PenaltyArgs {
    /// Penalty family for the sparse SVD.
    #[arg(long, default_value = "scad")]
    penalty: PenaltyFamily,
    /// Fixed row penalty for `U`; tuned by sample splitting when omitted.
    #[arg(long, requires = "lambda_v")]
    lambda_u: Option<f64>,
    /// Fixed row penalty for `V`.
    #[arg(long, requires = "lambda_u")]
    lambda_v: Option<f64>,
    /// Tune at every K instead of once at K = 1.
    #[arg(long)]
    tune_per_k: bool,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// a, b or c.
    #[arg(long)]
    model: ModelName,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    q: usize,
    #[arg(long)]
    p: usize,
    /// Signal level; a comma list runs one cell per value.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    c: Vec<f64>,
    /// gn, oracle-gn, md-chi2 or md-norm; a comma list runs each.
    #[arg(long, value_delimiter = ',', default_value = "gn")]
    method: Vec<MethodKind>,
    /// Rank under the null.
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Replaces the model's noise: normal, t:DF or gamma:SHAPE,SCALE.
    #[arg(long)]
    noise: Option<ErrorDist>,
    /// Fills the seconds column (breaks byte-identical reruns).
    #[arg(long)]
    timings: bool,
    #[command(flatten)]
    penalty: PenaltyArgs,
}

#[derive(Debug, Args)]
struct TestArgs {
    /// Directory of CSV samples, or a list file naming them.
    #[arg(long)]
    samples: PathBuf,
    /// gn, md-chi2 or md-norm.
    #[arg(long, default_value = "gn")]
    method: MethodKind,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Largest K tested sequentially.
    #[arg(long, default_value_t = 4, conflicts_with = "k")]
    k_max: usize,
    /// Test a single K instead of the sequential path.
    #[arg(long)]
    k: Option<usize>,
    /// Known noise variance for the minimum-discrepancy tests.
    #[arg(long)]
    sigma0_sq: Option<f64>,
    #[command(flatten)]
    penalty: PenaltyArgs,
}

#[derive(Debug, Args)]
struct RankScanArgs {
    /// Directory of frames, or a list file naming them.
    #[arg(long)]
    frames: PathBuf,
    #[arg(long, default_value = "pgm")]
    format: FrameFormat,
    #[arg(long, default_value_t = 10)]
    window: usize,
    #[arg(long, default_value_t = 5)]
    stride: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 4)]
    k_max: usize,
    #[arg(long, default_value = "gn")]
    method: MethodKind,
    /// Background is the pixel median of the first K frames.
    #[arg(long, default_value_t = 25, conflicts_with = "background")]
    background_median: usize,
    /// Background frame as CSV, subtracted from every frame.
    #[arg(long)]
    background: Option<PathBuf>,
    /// Per-window labels (`window_index,label`) for detection metrics.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Where to write the metrics CSV (default: stderr summary only).
    #[arg(long, requires = "labels")]
    metrics: Option<PathBuf>,
    /// Plain-text `start_frame estimated_rank` data for plotting.
    #[arg(long)]
    plot: Option<PathBuf>,
    #[command(flatten)]
    penalty: PenaltyArgs,
}

#[derive(Debug, Args)]
struct SparseSvdArgs {
    /// Mean matrix CSV.
    #[arg(long, required_unless_present = "samples", conflicts_with = "samples")]
    mean: Option<PathBuf>,
    /// Sample set whose mean is decomposed; enables penalty tuning.
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long)]
    k: usize,
    #[command(flatten)]
    penalty: PenaltyArgs,
}

#[derive(Debug, Args)]
struct FixtureArgs {
    #[arg(long, default_value_t = 600)]
    frames: usize,
    /// Window and stride used for the written labels.
    #[arg(long, default_value_t = 10)]
    window: usize,
    #[arg(long, default_value_t = 5)]
    stride: usize,
    /// Write P2 (text) instead of P5 frames.
    #[arg(long)]
    ascii: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
