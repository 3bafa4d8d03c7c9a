//! The `mgnets` command line.
//!
//! Every subcommand writes into an output directory (created if absent) and
//! leaves a `run_<name>.json` record of its flags and seed next to its
//! artifacts. Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | I/O or internal failure |
//! | 2 | invalid flags or arguments |
//! | 3 | `params --expect` mismatch |
//! | 4 | non-finite loss during training |
//! | 5 | dataset or checkpoint incompatible with the request |

mod commands;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::cyclegraph::{ChannelPolicy, CountConvention, Family};
use crate::Error;

pub use commands::{
    cmd_eval, cmd_gen, cmd_graph, cmd_params, cmd_poisson, cmd_repro, cmd_train, ParamsReport, ReproSummary,
    SUMMARY_CSV_HEADER,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_MISMATCH: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_DATA: i32 = 5;

/// A failed subcommand with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    /// Reclassifies dataset and checkpoint loading failures as data
    /// incompatibilities.
    pub(crate) fn data(err: Error) -> Self {
        match err {
            Error::NonFinite { .. } => err.into(),
            other => CliError::new(EXIT_DATA, other.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        let code = match &err {
            Error::InvalidArgument(_) | Error::Unsupported(_) => EXIT_USAGE,
            Error::NonFinite { .. } => EXIT_NUMERIC,
            Error::Format { .. } | Error::UninitializedStatistics(_) => EXIT_DATA,
            Error::Structural(_) | Error::Io(_) | Error::Json(_) => EXIT_FAILURE,
        };
        CliError::new(code, err.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        Error::from(err).into()
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "mgnets", version, about = "Multigrid solvers and multigrid-shaped segmentation networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the 1D/2D Poisson model problem and write residual histories.
    Poisson(PoissonArgs),
    /// Count the parameters of an architecture.
    Params(ParamsArgs),
    /// Write the architecture graph in Graphviz dot format.
    Graph(GraphArgs),
    /// Generate the synthetic nested-ellipse dataset.
    Gen(GenArgs),
    /// Train one network and write its loss curve and checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset and write the metrics table.
    Eval(EvalArgs),
    /// Dataset, three trainings, three evaluations and the solver comparison.
    Repro(ReproArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Poisson(_) => "poisson",
            Command::Params(_) => "params",
            Command::Graph(_) => "graph",
            Command::Gen(_) => "gen",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Repro(_) => "repro",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CycleChoice {
    V,
    W,
    Fmg,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmootherChoice {
    GaussSeidel,
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    All,
    Validation,
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_policy(s: &str) -> Result<ChannelPolicy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_convention(s: &str) -> Result<CountConvention, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PoissonArgs {
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    /// Interior points per axis, 2^k - 1.
    #[arg(long, default_value_t = 63)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = CycleChoice::All)]
    pub cycle: CycleChoice,
    #[arg(long, value_enum, default_value_t = SmootherChoice::GaussSeidel)]
    pub smoother: SmootherChoice,
    /// Weighted Jacobi relaxation factor.
    #[arg(long, default_value_t = 2.0 / 3.0)]
    pub omega: f64,
    #[arg(long, default_value_t = 2)]
    pub pre_sweeps: usize,
    #[arg(long, default_value_t = 2)]
    pub post_sweeps: usize,
    /// Relative residual at which a solve stops.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long, default_value_t = 10)]
    pub max_cycles: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ArchArgs {
    #[arg(long, value_parser = parse_family)]
    pub family: Family,
    /// Depth label; see `--convention`.
    #[arg(long)]
    pub depth: usize,
    /// `published`: the depth label counts downsamplings (label + 1 grids) and
    /// batch norm counts four scalars per channel. `trainable`: the label is
    /// the number of grids and only trainable scalars are counted.
    #[arg(long, value_parser = parse_convention, default_value = "published")]
    pub convention: CountConvention,
    /// Channel policy; defaults to doubling for unet and pocket otherwise.
    #[arg(long, value_parser = parse_policy)]
    pub policy: Option<ChannelPolicy>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ParamsArgs {
    #[command(flatten)]
    pub arch: ArchArgs,
    #[arg(long, default_value_t = 3)]
    pub dims: usize,
    #[arg(long, default_value_t = 4)]
    pub in_channels: usize,
    #[arg(long, default_value_t = 4)]
    pub out_channels: usize,
    #[arg(long, default_value_t = 32)]
    pub base: usize,
    /// Exit with code 3 unless the count equals this.
    #[arg(long)]
    pub expect: Option<u64>,
    /// Accept `--expect` within this relative error instead of exactly.
    #[arg(long, default_value_t = 0.0)]
    pub rel_tol: f64,
    /// CSV the count is appended to, relative to `--out`.
    #[arg(long, default_value = "params.csv")]
    pub csv: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GraphArgs {
    #[command(flatten)]
    pub arch: ArchArgs,
    #[arg(long, default_value_t = 2)]
    pub dims: usize,
    #[arg(long, default_value_t = 1)]
    pub in_channels: usize,
    #[arg(long, default_value_t = 4)]
    pub out_channels: usize,
    #[arg(long, default_value_t = 32)]
    pub base: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenArgs {
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainOptions {
    #[arg(long, default_value_t = 25)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 3e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub base: usize,
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    /// Disable random flips and quarter turns.
    #[arg(long)]
    pub no_augment: bool,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub arch: ArchArgs,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub options: TrainOptions,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Seeds the initialisation, the split and the batch order.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Which cases to score; `validation` recomputes the split from `--seed`.
    #[arg(long, value_enum, default_value_t = Subset::Validation)]
    pub subset: Subset,
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    /// Name of the metrics CSV inside `--out`.
    #[arg(long, default_value = "metrics.csv")]
    pub name: String,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReproArgs {
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Depth label of the three networks (label + 1 grids).
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    #[command(flatten)]
    pub options: TrainOptions,
    /// Interior points per axis of the 2D Poisson comparison.
    #[arg(long, default_value_t = 63)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub max_cycles: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

/// Runs a parsed command, printing progress and results to stdout.
pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Poisson(a) => cmd_poisson(&a).map(drop),
        Command::Params(a) => cmd_params(&a).map(drop),
        Command::Graph(a) => cmd_graph(&a).map(drop),
        Command::Gen(a) => cmd_gen(&a).map(drop),
        Command::Train(a) => cmd_train(&a).map(drop),
        Command::Eval(a) => cmd_eval(&a).map(drop),
        Command::Repro(a) => cmd_repro(&a).map(drop),
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let name = cli.command.name();
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("mgnets {name}: {e}");
            e.code
        }
    }
}
