//! `sparc`: experiments with sparse superposition codes.

mod commands;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "sparc", version, about = "Sparse superposition codes: simulation, state evolution and thresholds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode one random message and write message, codeword, received signal and operator manifest.
    Encode(EncodeArgs),
    /// Monte Carlo decoding trials at one rate.
    Simulate(SimulateArgs),
    /// Decoding trials over a list of rates.
    Sweep(SweepArgs),
    /// State-evolution trajectory.
    Se(SeArgs),
    /// Replica potential on an MSE grid.
    Potential(PotentialArgs),
    /// BP and optimal thresholds for one (B, snr).
    Thresholds(ThresholdArgs),
    /// Thresholds over a list of section sizes.
    PhaseDiagram(PhaseDiagramArgs),
    /// Exponential power allocation and its sequential decodability condition.
    Powalloc(PowallocArgs),
}

#[derive(Args, Clone)]
pub struct CodeArgs {
    /// Section size.
    #[arg(long = "B")]
    pub b: usize,
    /// Number of sections.
    #[arg(long = "L")]
    pub l: usize,
    /// Rate in bits per channel use.
    #[arg(long = "R")]
    pub rate: f64,
    #[arg(long)]
    pub snr: f64,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum OperatorArg {
    Gaussian,
    Hadamard,
    Coupled,
    CoupledGaussian,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum DecoderArg {
    Amp,
    Simplified,
    Residual,
    RelaxedBp,
}

#[derive(Args, Clone)]
pub struct OperatorArgs {
    #[arg(long, value_enum, default_value = "hadamard")]
    pub operator: OperatorArg,
    /// Column blocks of a coupled operator.
    #[arg(long = "Lc", default_value_t = 16)]
    pub l_c: usize,
    /// Row blocks of a coupled operator.
    #[arg(long = "Lr", default_value_t = 17)]
    pub l_r: usize,
    /// Coupling window.
    #[arg(long, default_value_t = 2)]
    pub w: usize,
    /// Square root of the upper-diagonal variance.
    #[arg(long = "sqrtJ", default_value_t = 0.4)]
    pub sqrt_j: f64,
    #[arg(long = "beta-seed", default_value_t = 1.4)]
    pub beta_seed: f64,
    /// Exponential power allocation with this many groups.
    #[arg(long = "G")]
    pub groups: Option<usize>,
}

#[derive(Args, Clone)]
pub struct RunArgs {
    #[arg(long, value_enum, default_value = "amp")]
    pub decoder: DecoderArg,
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "t-max", default_value_t = 500)]
    pub t_max: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,
    /// Worker threads; defaults to all cores.
    #[arg(long, env = "SPARC_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Args, Clone)]
pub struct OutArgs {
    /// Directory for tables and the JSON summary; tables go to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EncodeArgs {
    #[command(flatten)]
    pub code: CodeArgs,
    #[command(flatten)]
    pub operator: OperatorArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub code: CodeArgs,
    #[command(flatten)]
    pub operator: OperatorArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub out: OutArgs,
    /// Also write the manifest of every trial here.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long = "B")]
    pub b: usize,
    #[arg(long = "L")]
    pub l: usize,
    #[arg(long)]
    pub snr: f64,
    /// Comma-separated rates.
    #[arg(long = "R-list", value_delimiter = ',', required = true)]
    pub rates: Vec<f64>,
    #[command(flatten)]
    pub operator: OperatorArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct SeArgs {
    #[arg(long = "B")]
    pub b: usize,
    #[arg(long = "R")]
    pub rate: f64,
    #[arg(long)]
    pub snr: f64,
    /// `coupled` runs the coupled recursion with the ensemble flags.
    #[arg(long, value_enum, default_value = "hadamard")]
    pub operator: OperatorArg,
    #[arg(long = "Lc", default_value_t = 16)]
    pub l_c: usize,
    #[arg(long = "Lr", default_value_t = 17)]
    pub l_r: usize,
    #[arg(long, default_value_t = 2)]
    pub w: usize,
    #[arg(long = "sqrtJ", default_value_t = 0.4)]
    pub sqrt_j: f64,
    #[arg(long = "beta-seed", default_value_t = 1.4)]
    pub beta_seed: f64,
    /// Power-allocated recursion over this many exponential groups.
    #[arg(long = "G")]
    pub groups: Option<usize>,
    /// Take the variance profile from an operator manifest.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long = "mc-samples", default_value_t = 1_000_000)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "t-max", default_value_t = 500)]
    pub t_max: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct PotentialArgs {
    #[arg(long = "B")]
    pub b: usize,
    #[arg(long = "R")]
    pub rate: f64,
    #[arg(long)]
    pub snr: f64,
    /// Number of MSE grid points.
    #[arg(long, default_value_t = 400)]
    pub grid: usize,
    #[arg(long = "mc-samples", default_value_t = 1_000_000)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Clone)]
pub struct SearchArgs {
    #[arg(long = "mc-samples", default_value_t = 200_000)]
    pub mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Grid size of the tabulated scalar channel (B > 2).
    #[arg(long = "table-points", default_value_t = 200)]
    pub table_points: usize,
}

#[derive(Args)]
pub struct ThresholdArgs {
    #[arg(long = "B")]
    pub b: usize,
    #[arg(long)]
    pub snr: f64,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct PhaseDiagramArgs {
    #[arg(long)]
    pub snr: f64,
    /// Comma-separated section sizes.
    #[arg(long = "B-list", value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[command(flatten)]
    pub search: SearchArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args)]
pub struct PowallocArgs {
    #[arg(long = "G")]
    pub groups: usize,
    #[arg(long)]
    pub snr: f64,
    #[arg(long = "R")]
    pub rate: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Encode(a) => commands::encode(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Se(a) => commands::se(&a),
        Command::Potential(a) => commands::potential(&a),
        Command::Thresholds(a) => commands::thresholds(&a),
        Command::PhaseDiagram(a) => commands::phase_diagram(&a),
        Command::Powalloc(a) => commands::powalloc(&a),
    }
}
