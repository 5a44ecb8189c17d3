//! rsketch: streaming estimates of rank-k Frobenius residuals and
//! k-residual ℓp norms over turnstile datasets, plus exact oracles and
//! synthetic dataset generators.
//!
//! Every run prints one JSON report document on stdout. Exit codes:
//! 0 success, 2 argument/parse/validation failure, 3 numerical failure.

mod io;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use residual_sketch::Error;

#[derive(Parser)]
#[command(name = "rsketch", version, about = "Residual-norm sketches over matrix and vector turnstile streams")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Estimate the rank-k Frobenius residual of a sparse matrix.
    Lowrank(LowrankArgs),
    /// Estimate the k-residual ℓp norm of a vector update stream.
    Vector(VectorArgs),
    /// Vector run that also emits the recovered k-sparse support.
    Recover(VectorArgs),
    /// Compare OSNAP against the dense Gaussian baseline on one dataset.
    Bench(BenchArgs),
    /// Write a synthetic dataset.
    #[command(subcommand)]
    Gen(GenCmd),
    /// Compute the exact residual with no sketching.
    Exact(ExactArgs),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    /// MatrixMarket coordinate file.
    Mm,
    /// UCI bag-of-words docword file.
    Bow,
    /// Vector update stream: `n` header line, then `index value` lines.
    Stream,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    Countsketch,
    Jl,
    Osnap,
    Gaussian,
    /// Dense JL applied on top of a wide CountSketch stage.
    Composed,
}

#[derive(Args)]
struct DataArgs {
    /// Input dataset path.
    #[arg(long)]
    dataset: PathBuf,
    /// Dataset layout.
    #[arg(long, value_enum)]
    format: Format,
    /// Also write the JSON report to this path.
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Args)]
struct LowrankArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Target rank.
    #[arg(long)]
    k: usize,
    /// Sketch dimension per side.
    #[arg(long)]
    m: usize,
    /// Sketch family.
    #[arg(long, value_enum, default_value_t = FamilyArg::Composed)]
    family: FamilyArg,
    /// Nonzeros per OSNAP column.
    #[arg(long, default_value_t = 2)]
    s: usize,
    /// Independent seeded repetitions.
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also compute the exact residual and per-trial relative errors.
    #[arg(long)]
    with_exact: bool,
}

#[derive(Args)]
struct VectorArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Coordinates counted as head (excluded from the residual).
    #[arg(long)]
    k: usize,
    /// Norm order; must be finite and greater than 2.
    #[arg(long)]
    p: f64,
    /// Accuracy parameter in (0, 1].
    #[arg(long, default_value_t = 0.5)]
    eps: f64,
    /// Bucket-count multiplier.
    #[arg(long, default_value_t = 1.0)]
    cb: f64,
    /// Row-count multiplier.
    #[arg(long, default_value_t = 3.0)]
    cl: f64,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also replay the stream densely for ground truth.
    #[arg(long)]
    with_exact: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    m: usize,
    /// Nonzeros per OSNAP column.
    #[arg(long, default_value_t = 2)]
    s: usize,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Compute the exact residual once and report per-family errors.
    #[arg(long)]
    with_exact: bool,
}

#[derive(Args)]
struct ExactArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    k: usize,
    /// Norm order; required for stream datasets, ignored otherwise.
    #[arg(long)]
    p: Option<f64>,
}

#[derive(Subcommand)]
enum GenCmd {
    /// Planted near-low-rank matrix pair member (MatrixMarket output).
    Hard(GenHardArgs),
    /// Zipf-distributed turnstile vector stream.
    Zipf(GenZipfArgs),
    /// Blockwise vector stream with planted spikes.
    Gap(GenGapArgs),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    /// Plants k−1 strong directions.
    D1,
    /// Plants k strong directions.
    D2,
}

#[derive(Args)]
struct GenHardArgs {
    /// Output path (MatrixMarket).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    eps: f64,
    #[arg(long, value_enum)]
    variant: VariantArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Also write the JSON summary to this path.
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Args)]
struct GenZipfArgs {
    /// Output path (stream format).
    #[arg(long)]
    out: PathBuf,
    /// Universe size.
    #[arg(long)]
    n: usize,
    /// Zipf exponent.
    #[arg(long, default_value_t = 1.1)]
    exponent: f64,
    /// Magnitude of the largest coordinate; defaults to n.
    #[arg(long)]
    scale: Option<f64>,
    /// Total update budget; defaults to 2n.
    #[arg(long)]
    updates: Option<usize>,
    /// Approximate fraction of updates spent on canceling +/− pairs.
    #[arg(long, default_value_t = 0.25)]
    churn: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Args)]
struct GenGapArgs {
    /// Output path (stream format).
    #[arg(long)]
    out: PathBuf,
    /// Number of blocks, each eligible for one spike.
    #[arg(long)]
    k: usize,
    /// Block width; the universe size is k·block.
    #[arg(long)]
    block: usize,
    /// Spike magnitude.
    #[arg(long)]
    spike: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    json_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("rsketch: {err}");
            ExitCode::from(match err {
                Error::Numerical(_) => 3,
                _ => 2,
            })
        }
    }
}
