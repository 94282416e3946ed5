mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Block Hadamard rotations, permutations and few-bit quantization of
/// activation matrices.
#[derive(Parser)]
#[command(name = "mixquant", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic activations into a MIXQ file.
    Gen(GenArgs),
    /// Convert a CSV of reals (one token per row) into a MIXQ file.
    Import(ImportArgs),
    /// Addition/subtraction counts for Hadamard rotations.
    Opcount(OpcountArgs),
    /// Build a permutation from calibration activations.
    Calibrate(CalibrateArgs),
    /// Check a rotation bound on every row of an activation file.
    Verify(VerifyArgs),
    /// Random SwiGLU FFN weights.
    GenFfn(GenFfnArgs),
    /// Run the quantized FFN graph and report per-stage statistics.
    Pipeline(PipelineArgs),
    /// Pipeline output error across permutation strategies.
    Compare(CompareArgs),
    /// Block concentration statistic across block sizes.
    Fig5(Fig5Args),
    /// Apply a block or full-vector Hadamard rotation.
    Rotate(RotateArgs),
    /// Quantize activations into a MIXQ-Q file.
    Quantize(QuantizeArgs),
    /// Sign statistics against the i.i.d. Rademacher model.
    Rademacher(RademacherArgs),
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum DistArg {
    Gaussian,
    Laplacian,
    StudentT,
    SparseOutlier,
    HeavyTailed,
}

#[derive(Args, serde::Serialize)]
struct GenArgs {
    #[arg(long, value_enum)]
    dist: DistArg,
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mean or location.
    #[arg(long, default_value_t = 0.0)]
    loc: f64,
    /// Standard deviation or scale.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 3.0)]
    dof: f64,
    /// Outlier channels for sparse-outlier.
    #[arg(long, default_value_t = 4)]
    count: usize,
    #[arg(long, default_value_t = 50.0)]
    magnitude: f64,
    /// Background standard deviation for sparse-outlier.
    #[arg(long, default_value_t = 1.0)]
    background: f64,
    /// Log-normal per-channel scale spread.
    #[arg(long)]
    channel_spread: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, serde::Serialize)]
struct ImportArgs {
    #[arg(long)]
    csv: PathBuf,
    /// Skip the first line.
    #[arg(long)]
    header: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum TableArg {
    Block,
    Nonpo2,
    All,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum FormatArg {
    Text,
    Csv,
}

#[derive(Args, serde::Serialize)]
struct OpcountArgs {
    /// Single dimension; omit to print the model tables.
    #[arg(long)]
    d: Option<usize>,
    /// Block size for `--d`.
    #[arg(long, conflicts_with = "full")]
    b: Option<usize>,
    /// Full-vector counts for `--d`.
    #[arg(long)]
    full: bool,
    #[arg(long, value_enum, default_value = "all")]
    table: TableArg,
    #[arg(long, value_enum, default_value = "text")]
    format: FormatArg,
    /// Write to a file (with a run manifest) instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum StrategyArg {
    Identity,
    Random,
    Absmax,
    Zigzag,
    ZigzagAbsmax,
    Massdiff,
    Optimal,
}

#[derive(Args, serde::Serialize)]
struct CalibrateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    block_size: usize,
    #[arg(long, value_enum, default_value = "massdiff")]
    strategy: StrategyArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Permutation file; `.json` for JSON, binary MIXP otherwise.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, serde::Serialize)]
struct VerifyArgs {
    #[arg(long)]
    input: PathBuf,
    /// 1: full-vector bound, 2: block bound, 3: block-size refinement,
    /// 4: probabilistic bound.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    prop: u8,
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Rows used as magnitude vectors for prop 4.
    #[arg(long, default_value_t = 8)]
    max_rows: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-row CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// JSON summary; printed to stdout when omitted.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args, serde::Serialize)]
struct GenFfnArgs {
    #[arg(long, default_value_t = 64)]
    d_model: usize,
    #[arg(long, default_value_t = 256)]
    d_ff: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, serde::Serialize)]
struct PipelineArgs {
    /// Directory from `gen-ffn`.
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Graph configuration JSON; all transforms off when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write merged deployment weights under `<out>/deployed`.
    #[arg(long)]
    deploy: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, serde::Serialize)]
struct CompareArgs {
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 16)]
    block_size: usize,
    #[arg(long, default_value_t = 4)]
    bits: u8,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "identity,massdiff"
    )]
    strategies: Vec<StrategyArg>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, serde::Serialize)]
struct Fig5Args {
    #[arg(long)]
    input: PathBuf,
    /// Defaults to every power of 2 dividing the row length.
    #[arg(long, value_delimiter = ',')]
    block_sizes: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, serde::Serialize)]
struct RotateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, conflicts_with = "full", required_unless_present = "full")]
    block_size: Option<usize>,
    #[arg(long)]
    full: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum QuantFormatArg {
    IntSym,
    IntAsym,
    Fp4,
    Mxfp4,
}

#[derive(Clone, Copy, ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
enum GranularityArg {
    Token,
    Channel,
    Group,
}

#[derive(Args, serde::Serialize)]
struct QuantizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "int-sym")]
    format: QuantFormatArg,
    #[arg(long, default_value_t = 4)]
    bits: u8,
    #[arg(long, value_enum, default_value = "token")]
    granularity: GranularityArg,
    #[arg(long)]
    group_size: Option<usize>,
    /// Grid-searched clipping instead of absmax scaling.
    #[arg(long)]
    mse: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, serde::Serialize)]
struct RademacherArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("MIXQUANT_THREADS") {
        let n: usize = v.parse().map_err(|_| {
            anyhow::anyhow!("MIXQUANT_THREADS must be a positive integer, got `{v}`")
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Import(a) => commands::import(a),
        Command::Opcount(a) => commands::opcount(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Verify(a) => commands::verify(a),
        Command::GenFfn(a) => commands::gen_ffn(a),
        Command::Pipeline(a) => commands::pipeline(a),
        Command::Compare(a) => commands::compare(a),
        Command::Fig5(a) => commands::fig5(a),
        Command::Rotate(a) => commands::rotate(a),
        Command::Quantize(a) => commands::quantize(a),
        Command::Rademacher(a) => commands::rademacher(a),
    });
    match result {
        Ok(commands::Outcome::Clean) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Violations(n)) => {
            eprintln!("{n} bound violations");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
