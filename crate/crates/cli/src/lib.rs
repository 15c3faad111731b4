//! `fluxscale` command-line pipeline: synth → ingest → fit / sweep / stats.

pub mod commands;
pub mod store;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use fluxscale::numeric::Precision;
use fluxscale::{GroupError, IngestError, StatsError, SweepError, SynthError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_GENERIC: i32 = 1;
pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_THRESHOLD: i32 = 3;
pub const EXIT_INSUFFICIENT: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("rejection threshold exceeded: {0}")]
    Threshold(String),
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Generic(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => EXIT_SCHEMA,
            CliError::Threshold(_) => EXIT_THRESHOLD,
            CliError::Insufficient(_) => EXIT_INSUFFICIENT,
            CliError::Usage(_) | CliError::Generic(_) => EXIT_GENERIC,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Schema(msg) => CliError::Schema(msg),
            IngestError::RejectionThreshold { .. } => CliError::Threshold(e.to_string()),
            other => CliError::Generic(other.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidSpec(msg) => CliError::Usage(msg),
            other => CliError::Generic(other.to_string()),
        }
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::InvalidGrid(msg) => CliError::Usage(format!("invalid grid: {msg}")),
            SweepError::NoEntries | SweepError::TooFewEntries { .. } | SweepError::Stats(_) => {
                CliError::Insufficient(e.to_string())
            }
            other => CliError::Generic(other.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::Insufficient(e.to_string())
    }
}

impl From<GroupError> for CliError {
    fn from(e: GroupError) -> Self {
        match e {
            GroupError::UnknownKey(k) => CliError::Usage(format!("unknown group key {k:?}")),
            other => CliError::Insufficient(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Generic(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "fluxscale", version, about = "Taylor's-law fluctuation scaling of intraday illiquidity")]
pub struct Cli {
    /// Numeric output: 6 significant digits or full round-trip precision.
    #[arg(long, global = true, default_value = "6", value_parser = parse_precision)]
    pub precision: Precision,
    #[command(subcommand)]
    pub command: Command,
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    match s {
        "6" | "default" => Ok(Precision::Significant6),
        "full" => Ok(Precision::Full),
        other => Err(format!("expected `6` or `full`, got {other:?}")),
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate bar, metadata and calendar files into a store.
    Ingest(IngestArgs),
    /// Fit Taylor's law per group at one aggregation interval.
    Fit(FitArgs),
    /// Fit at every interval of a grid and describe b(Δt).
    Sweep(SweepArgs),
    /// Write a synthetic dataset with a known exponent.
    Synth(SynthArgs),
    /// Summary statistics of pooled illiquidity per group.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Bar files, or directories of `*.csv` bar files.
    #[arg(long, num_args = 1.., required = true)]
    pub bars: Vec<PathBuf>,
    #[arg(long)]
    pub calendar: PathBuf,
    #[arg(long)]
    pub meta: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Code-prefix rules, e.g. `000=SZMB,600=SHA`.
    #[arg(long)]
    pub prefix_map: Option<String>,
    /// Per-file fraction of rejected rows that aborts ingestion.
    #[arg(long, default_value_t = 0.10)]
    pub max_reject: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub dt: u32,
    /// all, market, category, sector or region.
    #[arg(long, default_value = "all")]
    pub group: String,
    /// Comma-separated markets.
    #[arg(long)]
    pub market_filter: Option<String>,
    /// Output directory (default `<store>/results`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = fluxscale::groups::DEFAULT_MIN_N)]
    pub min_n: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Comma-separated Δt values, or `default`.
    #[arg(long, default_value = "default")]
    pub grid: String,
    /// all or per-market.
    #[arg(long, default_value = "all")]
    pub scope: String,
    #[arg(long, default_value_t = fluxscale::sweep::DEFAULT_PLATEAU_EPSILON)]
    pub plateau_eps: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// poisson, gamma, lognormal or bar-level.
    #[arg(long)]
    pub family: String,
    /// `key=value,...` with keys k, b, log_a, instruments, samples, m_lo, m_hi,
    /// sigma_lo, sigma_hi, tau, duplicate_rate, zero_volume_rate, missing_rate.
    #[arg(long)]
    pub params: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub instruments: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub mean_lo: Option<f64>,
    #[arg(long)]
    pub mean_hi: Option<f64>,
    /// Gamma shape.
    #[arg(long)]
    pub k: Option<f64>,
    /// Lognormal target exponent.
    #[arg(long)]
    pub b: Option<f64>,
    /// Lognormal target log10 prefactor.
    #[arg(long, allow_hyphen_values = true)]
    pub log_a: Option<f64>,
    #[arg(long)]
    pub duplicate_rate: Option<f64>,
    #[arg(long)]
    pub zero_volume_rate: Option<f64>,
    #[arg(long)]
    pub missing_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub dt: u32,
    /// all, market, category, sector or region.
    #[arg(long, default_value = "market")]
    pub group: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Caps the rayon pool at `FLUXSCALE_THREADS` when set.
pub fn configure_threads() {
    if let Some(n) = std::env::var("FLUXSCALE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let precision = cli.precision;
    match cli.command {
        Command::Ingest(args) => commands::cmd_ingest(&args).map(|_| ()),
        Command::Fit(args) => commands::cmd_fit(&args, precision).map(|_| ()),
        Command::Sweep(args) => commands::cmd_sweep(&args, precision).map(|_| ()),
        Command::Synth(args) => commands::cmd_synth(&args).map(|_| ()),
        Command::Stats(args) => commands::cmd_stats(&args, precision).map(|_| ()),
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    run(cli)
}
