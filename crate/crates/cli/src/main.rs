//! `nmcdse` command-line tool.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use nmcdse::config::{ToolConfig, KEYS};

/// Usage errors exit with 1, data errors with 2.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) => m,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

const UNITS_HELP: &str = "\
Quantities take unit suffixes: sizes B|KB|MB|GB (binary, 1KB = 1024 B), \
bandwidths B/s|KB/s|MB/s|GB/s (decimal), frequencies Hz|MHz|GHz, \
energies pJ/b and pJ, powers W|mW, times s|ms|us|ns, latencies cycles. \
A bare number is in the base unit.";

#[derive(Debug, Parser)]
#[command(
    name = "nmcdse",
    version,
    about = "Characterize memory traces and model near-memory offload",
    after_long_help = config_keys_help()
)]
pub struct Cli {
    /// Key-value configuration file; unset keys keep their defaults
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Override one configuration key, e.g. `--set f_host=2GHz` (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic trace
    GenTrace(GenTraceArgs),
    /// Compute workload signatures for trace files
    Characterize(CharacterizeArgs),
    /// Compare host and host+NMC for one workload profile
    Model(ModelArgs),
    /// Sweep miss rates and memory geometry, writing CSV
    Sweep(SweepArgs),
    /// Rank kernels for offload from their signatures
    Advise(AdviseArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenTrace(_) => "gen-trace",
            Command::Characterize(_) => "characterize",
            Command::Model(_) => "model",
            Command::Sweep(_) => "sweep",
            Command::Advise(_) => "advise",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Pattern {
    Sequential,
    Strided,
    Random,
    PointerChase,
    Stencil1d,
    Diagonal,
}

#[derive(Debug, Args)]
#[command(after_help = UNITS_HELP)]
pub struct GenTraceArgs {
    #[arg(long, value_enum)]
    pub pattern: Pattern,
    /// Memory accesses; required except for stencil1d and diagonal, which it truncates
    #[arg(long, value_name = "COUNT")]
    pub n: Option<u64>,
    /// strided: distance between accesses (size)
    #[arg(long, value_name = "SIZE")]
    pub stride: Option<String>,
    /// random: address range (size)
    #[arg(long, value_name = "SIZE")]
    pub range: Option<String>,
    /// random, pointer-chase: RNG seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// pointer-chase: number of nodes
    #[arg(long)]
    pub nodes: Option<u64>,
    /// pointer-chase: node spacing (size)
    #[arg(long, value_name = "SIZE", default_value = "64B")]
    pub node_bytes: String,
    /// stencil1d: bytes per array (size)
    #[arg(long, value_name = "SIZE")]
    pub array: Option<String>,
    /// stencil1d: number of sweeps
    #[arg(long, default_value_t = 1)]
    pub sweeps: u32,
    /// diagonal: matrix dimension
    #[arg(long)]
    pub dim: Option<u64>,
    /// Access size in bytes: 1, 2, 4, 8, 16, 32 or 64
    #[arg(long, value_name = "SIZE", default_value = "8B")]
    pub element_size: String,
    /// Fraction of emitted instructions that are non-memory, 0..1
    #[arg(long, default_value_t = 0.0)]
    pub compute_mix: f64,
    /// Register dependences: independent, chain or fanout:K
    #[arg(long, default_value = "independent")]
    pub deps: String,
    /// Instructions per basic block
    #[arg(long, default_value_t = 16)]
    pub block_len: u32,
    /// sequential, strided: wrap addresses within this many bytes (size)
    #[arg(long, value_name = "SIZE")]
    pub footprint: Option<String>,
    /// First address, decimal or 0x-prefixed hex
    #[arg(long, default_value = "0")]
    pub base: String,
    /// Trace name in the header [default: pattern name]
    #[arg(long)]
    pub name: Option<String>,
    /// Output path [default: standard output]
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(after_help = UNITS_HELP)]
pub struct CharacterizeArgs {
    /// Trace files, plain or gzip
    #[arg(required = true, value_name = "TRACE")]
    pub traces: Vec<PathBuf>,
    /// Signature output for a single trace [default: standard output]
    #[arg(long, value_name = "PATH", conflicts_with = "out_dir")]
    pub out: Option<PathBuf>,
    /// Directory for `<trace stem>.sig.json` files
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Also write `<PREFIX>.entropy.csv` and `<PREFIX>.spatial.csv`
    /// (`<PREFIX>_<stem>.*` with several traces)
    #[arg(long, value_name = "PREFIX")]
    pub csv: Option<String>,
    /// LRU capacity for spatial locality (size) [default: config `capacity`, 32768B]
    #[arg(long, value_name = "SIZE")]
    pub capacity: Option<String>,
    /// L2 capacity for measured miss rates (size) [default: config `l2_capacity`, 262144B]
    #[arg(long, value_name = "SIZE")]
    pub l2_capacity: Option<String>,
    /// Line sizes as consecutive doublings [default: config `line_pairs`, 8,16,32,64,128]
    #[arg(long, value_name = "LIST")]
    pub pairs: Option<String>,
    /// Entropy bit reductions, ascending [default: config `reductions`, 0,3,6,9]
    #[arg(long, value_name = "LIST")]
    pub reductions: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
#[command(after_help = UNITS_HELP)]
pub struct ModelArgs {
    /// L1 miss rate, 0..1 [default: config `m1`, 0]
    #[arg(long)]
    pub m1: Option<String>,
    /// L2 local miss rate, 0..1 [default: config `m2`, 0]
    #[arg(long)]
    pub m2: Option<String>,
    /// Dynamic instructions [default: config `n_instr`, 1e9]
    #[arg(long)]
    pub n_instr: Option<String>,
    /// Memory accesses [default: config `n_mem`, 5e8]
    #[arg(long)]
    pub n_mem: Option<String>,
    /// Offloaded share of the work, 0..1 [default: config `offload_fraction`, 1]
    #[arg(long)]
    pub offload: Option<String>,
    /// Parallel share of the work, 0..1 [default: config `parallel_fraction`, 1]
    #[arg(long)]
    pub parallel: Option<String>,
    /// Take counts and miss rates from a signature file
    #[arg(long, value_name = "PATH")]
    pub signature: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModelFormat::Json)]
    pub format: ModelFormat,
    /// Output path [default: standard output]
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(after_help = UNITS_HELP)]
pub struct SweepArgs {
    /// Axes as `name=value` or `name=start:end:step`; names m1, m2, n_vaults, n_links
    #[arg(long, default_value = "m1=0:1:0.1,m2=0:1:0.1")]
    pub grid: String,
    /// Output path [default: standard output]
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AdviseArgs {
    /// Signature JSON files
    #[arg(value_name = "SIGNATURE")]
    pub signatures: Vec<PathBuf>,
    /// JSON output; the table then goes to standard output
    /// [default: JSON on standard output, table on standard error]
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

fn config_keys_help() -> String {
    let defaults = ToolConfig::default();
    let mut text =
        String::from("Configuration keys (for --config files and --set), with defaults:\n");
    for k in KEYS {
        let value = defaults.get(k.key).unwrap_or_default();
        text.push_str(&format!("  {:<22} {:<14} {}\n", k.key, value, k.help));
    }
    text.push('\n');
    text.push_str(UNITS_HELP);
    text.push_str("\n\nEnvironment: NMCDSE_THREADS caps the number of worker threads.");
    text
}

fn init_threads() -> CliResult<()> {
    let Ok(value) = std::env::var("NMCDSE_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "NMCDSE_THREADS must be a positive integer, got `{value}`"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size thread pool: {e}")))
}

fn load_config(cli: &Cli) -> CliResult<ToolConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ToolConfig::load(path).map_err(|e| {
            let msg = format!("{}: {e}", path.display());
            match e {
                nmcdse::config::ConfigError::Io { .. } => CliError::Data(msg),
                _ => CliError::Usage(msg),
            }
        })?,
        None => ToolConfig::default(),
    };
    for pair in &cli.overrides {
        cfg.set_pair(pair)
            .map_err(|e| CliError::Usage(format!("--set {pair}: {e}")))?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> CliResult<()> {
    init_threads()?;
    let cfg = load_config(cli)?;
    commands::run(cli, cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("nmcdse {}: {}", cli.command.name(), e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
