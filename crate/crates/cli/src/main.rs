//! `setcomp`: synthesize composition samples, embed them, evaluate the six
//! criteria and report.
//!
//! Exit codes: 0 success, 1 evaluation failure on malformed data, 2 usage or
//! configuration error, 3 fusion provider or encoder adapter failure, 4 I/O
//! error, 5 sentences without embeddings.

mod adapter;
mod config;
mod embed;
mod error;
mod eval;
mod stats;
mod synth;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};

use crate::config::ConfigFile;
use crate::error::{CliError, Result};

/// Environment variable naming the encoder adapter's base URL; it also
/// serves `/fuse`.
pub const ADAPTER_URL_ENV: &str = "SETCOMP_ADAPTER_URL";
/// Bearer token for `--chat-url`.
pub const CHAT_API_KEY_ENV: &str = "SETCOMP_CHAT_API_KEY";

#[derive(Debug, Parser)]
#[command(
    name = "setcomp",
    version,
    about = "Evaluate set-like composition in sentence embeddings"
)]
struct Cli {
    /// File of `key = value` lines supplying any long flag not given on the
    /// command line.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for parallel sections; results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build overlap/difference/union samples from a corpus via sentence fusion.
    Synth(SynthArgs),
    /// Embed every sentence of a sample or sentence file into a store.
    Embed(EmbedArgs),
    /// Evaluate criteria c1..c6 and write summary, tables and histograms.
    Eval(EvalArgs),
    /// Summarize annotator ratings per operator.
    AnnotateStats(StatsArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Corpus: a .txt file, a directory of .txt files, or a JSONL of
    /// {"doc_id", "sentences"} records.
    #[arg(long, value_name = "PATH")]
    pub corpus: PathBuf,
    /// Output samples JSONL.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Base URL of a service answering POST /fuse [env: SETCOMP_ADAPTER_URL].
    #[arg(long, value_name = "URL")]
    pub provider_url: Option<String>,
    /// Shell command speaking the fusion protocol as JSON lines on stdin/stdout.
    #[arg(long, value_name = "CMD")]
    pub provider_cmd: Option<String>,
    /// Chat-completions endpoint to call directly.
    #[arg(long, value_name = "URL")]
    pub chat_url: Option<String>,
    /// Model name sent to --chat-url.
    #[arg(long, value_name = "NAME")]
    pub chat_model: Option<String>,
    /// Store of filter-encoder embeddings for the difference filter.
    #[arg(long, value_name = "FILE")]
    pub filter_store: Option<PathBuf>,
    /// Emit every difference pattern without filtering.
    #[arg(long)]
    pub no_filter: bool,
    /// Difference filter keeps pairs with cosine strictly below this [default: 0.25].
    #[arg(long, value_name = "X")]
    pub threshold: Option<f64>,
    /// Abort after this many fusion calls.
    #[arg(long, value_name = "N")]
    pub max_calls: Option<u64>,
    /// Attempts per fusion call, including the first [default: 5].
    #[arg(long, value_name = "N")]
    pub retries: Option<u32>,
    /// Per-request timeout in seconds [default: 60].
    #[arg(long, value_name = "S")]
    pub timeout_secs: Option<u64>,
    /// Minimum spacing between fusion calls in milliseconds [default: 0].
    #[arg(long, value_name = "MS")]
    pub min_interval_ms: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Samples JSONL, or a text file with one sentence per line.
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    /// Output store; a .jsonl extension selects the JSONL format.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Encoder adapter base URL answering POST /embed [env: SETCOMP_ADAPTER_URL].
    #[arg(long, value_name = "URL")]
    pub adapter_url: Option<String>,
    /// Shell command speaking the embed protocol as JSON lines.
    #[arg(long, value_name = "CMD")]
    pub adapter_cmd: Option<String>,
    /// Existing SCEV or JSONL store to import instead of calling an adapter.
    #[arg(long = "import", value_name = "FILE")]
    pub import: Option<PathBuf>,
    /// Model id requested from the adapter and recorded in the store.
    #[arg(long, value_name = "ID")]
    pub model: Option<String>,
    /// Sentences per adapter request [default: 64].
    #[arg(long, value_name = "N")]
    pub batch_size: Option<usize>,
    /// Per-request timeout in seconds [default: 300].
    #[arg(long, value_name = "S")]
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Samples JSONL produced by `synth`.
    #[arg(long, value_name = "FILE")]
    pub samples: PathBuf,
    /// Embedding store, one per model; repeat for several models.
    #[arg(long, value_name = "FILE", required = true)]
    pub store: Vec<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Comma-separated criteria [default: c1,c2,c3,c4,c5,c6].
    #[arg(long, value_name = "LIST")]
    pub criteria: Option<String>,
    /// Comma-separated measures for c1, c3, c4 [default: cosine,dot,l1,l2,ned].
    #[arg(long, value_name = "LIST")]
    pub measures: Option<String>,
    /// Values per ε grid [default: 132].
    #[arg(long, value_name = "N")]
    pub epsilon_count: Option<usize>,
    /// Fixed `lo,hi` for every ε grid instead of the per-run range.
    #[arg(long, value_name = "LO,HI", allow_hyphen_values = true)]
    pub epsilon_range: Option<String>,
    /// Histogram bins [default: 50].
    #[arg(long, value_name = "N")]
    pub bins: Option<usize>,
    /// Tolerance on |t_a + t_b − 1| for the middle class [default: 1e-6].
    #[arg(long, value_name = "X")]
    pub middle_tolerance: Option<f64>,
    /// Near-A threshold on t_a for c5 [default: 0.1].
    #[arg(long, value_name = "X")]
    pub theta_d: Option<f64>,
    /// Near-input threshold for the unequal-norm cases of c6 [default: 0.1].
    #[arg(long, value_name = "X")]
    pub theta_u1: Option<f64>,
    /// Recorded in the config snapshot; unused by any case [default: 0.1].
    #[arg(long, value_name = "X")]
    pub theta_u2: Option<f64>,
    /// Half-width of the comparable-norm band around ratio 1 [default: 0.05].
    #[arg(long, value_name = "X")]
    pub norm_band: Option<f64>,
    /// Drop samples with unembedded sentences instead of failing.
    #[arg(long)]
    pub skip_missing: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Annotations as JSONL, or CSV with a sample_id,operator,scores header.
    #[arg(long, value_name = "FILE")]
    pub annotations: PathBuf,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

/// Writes via a sibling temporary file so readers never see partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Io(format!("{}: not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    let io = error::at(path);
    let mut f = fs::File::create(&tmp).map_err(&io)?;
    f.write_all(bytes).map_err(&io)?;
    f.sync_all().map_err(&io)?;
    fs::rename(&tmp, path).map_err(&io)
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SETCOMP_LOG", level))
        .format_timestamp(None)
        .init();
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    if let Some(n) = cfg.layer(cli.threads, "threads")? {
        if n == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Synth(a) => synth::run(&a, &cfg),
        Command::Embed(a) => embed::run(&a, &cfg),
        Command::Eval(a) => eval::run(&a, &cfg),
        Command::AnnotateStats(a) => stats::run(&a, &cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("setcomp: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
