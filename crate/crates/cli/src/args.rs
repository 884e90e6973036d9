use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use trafficmat::pipeline::{
    DEFAULT_BLOCKS_PER_WINDOW, DEFAULT_BLOCK_SIZE, DEFAULT_QUEUE_DEPTH, DEFAULT_STREAMS,
};

#[derive(Debug, Parser)]
#[command(name = "trafficmat", version, about = "Anonymized hypersparse traffic matrices from packet streams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the windowed pipeline and write one TAR archive per window.
    Build(BuildArgs),
    /// Compute network quantities of archived blocks and their aggregates.
    Stats(StatsArgs),
    /// Keep or drop the traffic touching an address range.
    Filter(FilterArgs),
    /// Daily connection report from a tab-separated log.
    #[command(name = "d4m-report")]
    D4mReport(ReportArgs),
    /// Time the full pipeline on synthetic traffic.
    Bench(BenchArgs),
    /// Write synthetic packets (CSV) or a synthetic connection log.
    Gen(GenArgs),
    /// Precompute an anonymization lookup table.
    Mktable(MktableArgs),
}

#[derive(Debug, Args)]
pub struct WindowArgs {
    /// Packets per block (power of two).
    #[arg(long, default_value_t = DEFAULT_BLOCK_SIZE)]
    pub block_size: usize,
    /// Blocks per window (power of two).
    #[arg(long, default_value_t = DEFAULT_BLOCKS_PER_WINDOW)]
    pub blocks: usize,
    /// Parallel stream workers.
    #[arg(long, default_value_t = DEFAULT_STREAMS)]
    pub streams: usize,
    /// Bound of the block queue in front of the reporter.
    #[arg(long, default_value_t = DEFAULT_QUEUE_DEPTH)]
    pub queue_depth: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AnonKind {
    Direct,
    Table,
}

#[derive(Debug, Args)]
pub struct AnonArgs {
    /// File with the 32-byte key (raw or 64 hex digits). Falls back to
    /// the TRAFFICMAT_KEY environment variable.
    #[arg(long)]
    pub key_file: Option<PathBuf>,
    /// Compute every address directly or through a lookup table.
    #[arg(long, value_enum, default_value_t = AnonKind::Table)]
    pub anon: AnonKind,
    /// Prefix width covered by the lookup table (1..=32).
    #[arg(long, default_value_t = 24)]
    pub table_width: u8,
    /// Load a table made by `mktable` instead of building one.
    #[arg(long)]
    pub table_file: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Uniform,
    HeavyTail,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Pcap,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// Packet file to read.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub input: Option<PathBuf>,
    /// Input format; guessed from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Generate this many synthetic packets instead of reading a file.
    #[arg(long)]
    pub synthetic: Option<u64>,
    #[arg(long, value_enum, default_value_t = Model::HeavyTail)]
    pub model: Model,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Directory receiving the archives.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Metrics time series (default: <output>/metrics.tsv).
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Malformed input entries tolerated before giving up.
    #[arg(long, default_value_t = 1000)]
    pub error_budget: u64,
    #[command(flatten)]
    pub window: WindowArgs,
    #[command(flatten)]
    pub anon: AnonArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportFormatArg {
    Tsv,
    Json,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Archives to read, in window order.
    #[arg(required = true)]
    pub archives: Vec<PathBuf>,
    /// Aggregation levels above the blocks; rows cover levels 0..=L.
    #[arg(long, default_value_t = 0)]
    pub levels: u32,
    #[arg(long, value_enum, default_value_t = ReportFormatArg::Tsv)]
    pub format: ReportFormatArg,
    /// Output file (default: stdout).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    pub archive: PathBuf,
    /// Comma-separated CIDR blocks, addresses or `a-b` ranges; `all` or `none`.
    #[arg(long)]
    pub range: String,
    /// Drop traffic inside the range instead of keeping it.
    #[arg(long)]
    pub exclude: bool,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Tab-separated log with a header line.
    pub log: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    /// Directory receiving report_<date>.txt and .tsv.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Report date (YYYY-MM-DD); taken from the log name or today by default.
    #[arg(long)]
    pub date: Option<String>,
    #[arg(long, default_value_t = 1000)]
    pub error_budget: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Run time in seconds.
    #[arg(long, default_value_t = 10.0)]
    pub duration: f64,
    /// Sampling interval of the metrics series, in milliseconds.
    #[arg(long, default_value_t = 1000)]
    pub interval_ms: u64,
    #[arg(long, value_enum, default_value_t = Model::HeavyTail)]
    pub model: Model,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Metrics time series (default: stdout).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Key file; without one (and without TRAFFICMAT_KEY) a random key is used.
    #[arg(long)]
    pub key_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = AnonKind::Table)]
    pub anon: AnonKind,
    #[arg(long, default_value_t = 24)]
    pub table_width: u8,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Number of packets (or log lines with --log).
    #[arg(long)]
    pub count: u64,
    #[arg(long, value_enum, default_value_t = Model::HeavyTail)]
    pub model: Model,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Emit a connection log instead of packets.
    #[arg(long)]
    pub log: bool,
    /// Output file (default: stdout).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MktableArgs {
    #[arg(long, default_value_t = 24)]
    pub width: u8,
    #[arg(long)]
    pub key_file: Option<PathBuf>,
    #[arg(long, short)]
    pub output: PathBuf,
}
