//! `mtc`: turn labeled captures into sessions, features and classifier
//! evaluation reports.

mod commands;
mod error;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use mtc_core::features::Representation;

use error::Failure;

#[derive(Debug, Parser)]
#[command(name = "mtc", version, about = "Encrypted-traffic malware classification pipeline")]
pub struct Cli {
    /// Maximum worker threads for parallel stages (default: one per core)
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    /// More log output on stderr (-v info, -vv debug)
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse the captures listed in a manifest into a corpus store
    Ingest(IngestArgs),
    /// Apply payload, noise and family-size filters, then optionally balance
    Preprocess(PreprocessArgs),
    /// Session counts, per-family counts and TLS share of a corpus
    Stats(StatsArgs),
    /// Extract one representation into a tensor file and label file
    Featurize(FeaturizeArgs),
    /// Run an evaluation protocol
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Render a stored report
    Report(ReportArgs),
    /// Write the planted-signal synthetic capture corpus
    #[command(hide = true)]
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Dataset manifest (TOML)
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output corpus store
    #[arg(long)]
    pub out: PathBuf,
    /// TCP idle timeout in seconds
    #[arg(long, default_value_t = 300.0)]
    pub tcp_timeout: f64,
    /// UDP idle timeout in seconds
    #[arg(long, default_value_t = 300.0)]
    pub udp_timeout: f64,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Input corpus store
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Output corpus store
    #[arg(long)]
    pub out: PathBuf,
    /// Minimum total payload bytes per session (0 disables)
    #[arg(long, default_value_t = 784)]
    pub min_payload: u64,
    /// Denylist TOML replacing the built-in noise rules
    #[arg(long, value_name = "PATH", conflicts_with = "no_denylist")]
    pub denylist: Option<PathBuf>,
    /// Skip noise filtering
    #[arg(long)]
    pub no_denylist: bool,
    /// Drop malware families with fewer sessions than this
    #[arg(long, value_name = "N")]
    pub min_family: Option<usize>,
    /// Downsample the majority label to the minority count
    #[arg(long)]
    pub balance: bool,
    /// Seed for balancing
    #[arg(long, env = "MTC_SEED", default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Corpus store
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Print JSON instead of a table
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ExtractorArgs {
    /// Feature representation
    #[arg(long, default_value = "raw784")]
    pub repr: Representation,
    /// deepmal: packets per session
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    /// deepmal: payload bytes per packet
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// pktseq: packets per session
    #[arg(long, default_value_t = 32)]
    pub p: usize,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    /// Corpus store
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Output tensor file
    #[arg(long)]
    pub out: PathBuf,
    /// Output label file (default: <out>.labels)
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub extractor: ExtractorArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NativeModel {
    /// Random forest
    Rf,
    /// CART decision tree
    Dt,
    /// Extremely randomized trees
    Et,
    /// k-nearest neighbours
    Knn,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Built-in model
    #[arg(long, value_enum, default_value_t = NativeModel::Rf)]
    pub model: NativeModel,
    /// Trees per forest (rf, et)
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    /// Maximum tree depth (dt, rf, et)
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Neighbours (knn)
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// External model executable speaking the train/predict plugin contract
    #[arg(long, value_name = "EXE", conflicts_with = "model")]
    pub plugin: Option<PathBuf>,
    /// Architecture name passed to the plugin as --arch
    #[arg(long, requires = "plugin", default_value = "default")]
    pub arch: String,
    /// Argument placed before the plugin verb, e.g. a script path (repeatable)
    #[arg(
        long = "plugin-arg",
        value_name = "ARG",
        allow_hyphen_values = true,
        requires = "plugin"
    )]
    pub plugin_args: Vec<String>,
    /// JSON object merged into the plugin --config file
    #[arg(long, value_name = "PATH", requires = "plugin")]
    pub plugin_config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Corpus store (.mtc) or tensor file (FTNS)
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Label file for a tensor input (default: <in>.labels)
    #[arg(long, value_name = "PATH")]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CommonEvalArgs {
    #[command(flatten)]
    pub extractor: ExtractorArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Experiment seed
    #[arg(long, env = "MTC_SEED", default_value_t = 42)]
    pub seed: u64,
    /// Write the report JSON here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Binary,
    Family,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum IncrementalTaskArg {
    Binary,
    Family,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrderPreset {
    /// Dridex, Emotet, Hancitor, Valak, Bazarloader, Icedid, Zloader, Qakbot
    Mtab,
    /// Cridex, Geodo, Htbot, Shifu, Zeus, Miuref, Neris, Nsis, Virut
    Ustcb,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Stratified k-fold cross-validation
    Cv(CvArgs),
    /// Leave-one-family-out detection
    ZeroDay(ZeroDayArgs),
    /// Add malware families one at a time
    Incremental(IncrementalArgs),
    /// Train on one dataset, test one family of another
    Cross(CrossArgs),
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub common: CommonEvalArgs,
    /// Classification task
    #[arg(long, value_enum, default_value_t = TaskArg::Binary)]
    pub task: TaskArg,
    /// Number of folds
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Write per-sample predictions (CSV)
    #[arg(long, value_name = "PATH")]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ZeroDayArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub common: CommonEvalArgs,
    /// Held-out family (default: every malware family in turn)
    #[arg(long)]
    pub family: Option<String>,
    /// Also hold out a fifth of benign sessions and score both labels
    #[arg(long)]
    pub two_sided: bool,
    /// Write per-sample predictions (CSV)
    #[arg(long, value_name = "PATH")]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IncrementalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub common: CommonEvalArgs,
    /// Family order, comma separated (default: all families, sorted)
    #[arg(long, value_delimiter = ',', conflicts_with = "order_preset")]
    pub order: Vec<String>,
    /// Published family order
    #[arg(long, value_enum)]
    pub order_preset: Option<OrderPreset>,
    /// Which accuracies to compute per step
    #[arg(long, value_enum, default_value_t = IncrementalTaskArg::Both)]
    pub task: IncrementalTaskArg,
    /// Folds per step
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Keep every benign session instead of matching the malware total
    #[arg(long)]
    pub no_rebalance: bool,
}

#[derive(Debug, Args)]
pub struct CrossArgs {
    /// Training corpus store or tensor file
    #[arg(long, value_name = "PATH")]
    pub train: PathBuf,
    /// Test corpus store or tensor file
    #[arg(long, value_name = "PATH")]
    pub test: PathBuf,
    /// Family that must be present in the training data
    #[arg(long)]
    pub train_family: String,
    /// Family scored in the test data (default: same as --train-family)
    #[arg(long)]
    pub test_family: Option<String>,
    #[command(flatten)]
    pub common: CommonEvalArgs,
    /// Write per-sample predictions (CSV)
    #[arg(long, value_name = "PATH")]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report JSON written by `mtc eval`
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Print the report body as JSON
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory for captures and manifest.toml
    #[arg(long)]
    pub out: PathBuf,
    /// Full-length sessions per class
    #[arg(long, default_value_t = 400)]
    pub per_class: usize,
    /// Short (under 784 payload bytes) sessions per class
    #[arg(long, default_value_t = 8)]
    pub short: usize,
    /// DNS sessions per class
    #[arg(long, default_value_t = 8)]
    pub dns: usize,
    /// Generator seed
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Dataset name written to the manifest
    #[arg(long, default_value = "synth")]
    pub name: String,
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
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("{}", Failure::Usage("--jobs must be at least 1".into()));
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("cannot size thread pool: {e}");
        }
    }
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("mtc: {f}");
            ExitCode::from(f.code())
        }
    }
}
