use std::net::IpAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "stancebench",
    version,
    about = "In-context stance detection experiment pipeline"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter unanimous annotations and write the stratified split manifest.
    Split(SplitArgs),
    /// Render the full prompt grid for every test post.
    GenPrompts(GenPromptsArgs),
    /// Drop prompts that do not fit a model's context window.
    Budget(BudgetArgs),
    /// Send prompts to a backend and record completions in a run store.
    Run(RunArgs),
    /// Show completed, failed and pending counts of a run store.
    Status(StoreArgs),
    /// Truncate a torn final record left by an interrupted run.
    Repair(StoreArgs),
    /// Extract labels from completions and queue the rest for review.
    Parse(StoreArgs),
    /// Score a parsed run per experimental condition.
    Eval(EvalArgs),
    /// Compare a condition table with the shipped reference scores.
    Report(ReportArgs),
    /// Score an external predictions file against the test split.
    ImportPredictions(ImportArgs),
    /// Serve the review queue and reports over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value = "split.jsonl")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenPromptsArgs {
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value = "prompts.jsonl")]
    pub out: PathBuf,
    /// Where to write the template texts; defaults to `<out>.templates.json`.
    #[arg(long)]
    pub templates_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BudgetArgs {
    #[arg(long)]
    pub prompts: PathBuf,
    /// Shipped profile name, or a model listed in `--config`.
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Count tokens with a remote `/tokenize` endpoint instead of the approximation.
    #[arg(long)]
    pub tokenizer_url: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub exclusions: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub prompts: PathBuf,
    #[arg(long)]
    pub store: PathBuf,
    /// Model name recorded in the run; required unless replaying.
    #[arg(long)]
    pub model: Option<String>,
    /// Serve completions from a recorded fixture instead of the network.
    #[arg(long, conflicts_with_all = ["base_url", "api_key_env"])]
    pub replay: Option<PathBuf>,
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub retry_failed: bool,
    #[arg(long)]
    pub run_id: Option<String>,
    /// Counter description recorded in the manifest.
    #[arg(long, default_value = "approximate(4 chars/token)")]
    pub counter_kind: String,
}

#[derive(Debug, Args)]
pub struct StoreArgs {
    #[arg(long)]
    pub store: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long, default_value_t = stancebench::eval::DEFAULT_SUPPORT_THRESHOLD)]
    pub support_threshold: usize,
    /// Condition table path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Long-format plot data path.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    /// Also write the table as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub table: PathBuf,
    /// Reference table to diff against; the shipped one when absent.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Model name to look up in the reference; defaults to the table's model.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub split: PathBuf,
    /// Print the shipped fine-tune reference scores for this model alongside.
    #[arg(long)]
    pub reference_model: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: IpAddr,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Environment variable holding a shared secret required in the
    /// `x-review-secret` header.
    #[arg(long)]
    pub secret_env: Option<String>,
    /// Static review UI assets served under `/ui`.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}
