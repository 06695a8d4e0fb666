//! Command-line surface: `prepare`, `synth`, `train`, `eval`, `pareto`.
//!
//! Each command reads a JSON [`RunConfig`] (optional), applies flag
//! overrides, validates everything, and only then writes its outputs.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::{cmd_eval, cmd_pareto, cmd_prepare, cmd_synth, cmd_train, project_domains};
pub use config::{EvalConfig, ModelConfig, PathsConfig, PrepareConfig, RunConfig};

use crate::error::Result;

#[derive(Debug, Parser)]
#[command(
    name = "poe-rec",
    version,
    about = "Product-of-experts VAE for multi-domain recommendation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Binarize, filter and split raw rating TSVs into a dataset directory.
    Prepare(PrepareArgs),
    /// Generate a synthetic dataset directory.
    Synth(SynthArgs),
    /// Train a model on the training split of a dataset directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint or a baseline on the test split.
    Eval(EvalArgs),
    /// Mark the Pareto front of several evaluation reports.
    Pareto(ParetoArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// One `user<TAB>item<TAB>rating` file per domain, in domain order.
    #[arg(long = "input", num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub rating_threshold: Option<f64>,
    /// Comma-separated minimum reviews per item, one per domain.
    #[arg(long)]
    pub min_item_reviews: Option<String>,
    #[arg(long)]
    pub min_user_interactions: Option<usize>,
    #[arg(long, value_enum)]
    pub user_filter: Option<UserFilterArg>,
    /// Comma-separated domain names for the summary table.
    #[arg(long)]
    pub names: Option<String>,
    #[command(flatten)]
    pub split: SplitArgs,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub fold_in_fraction: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub users: Option<usize>,
    /// Comma-separated item counts, one per domain.
    #[arg(long)]
    pub items: Option<String>,
    #[arg(long)]
    pub correlation: Option<f64>,
    #[arg(long)]
    pub missing_domain_fraction: Option<f64>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub interactions_mean: Option<f64>,
    #[arg(long)]
    pub affinity_scale: Option<f64>,
    #[arg(long)]
    pub popularity_std: Option<f64>,
    #[command(flatten)]
    pub split: SplitArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory written by `prepare` or `synth`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Comma-separated reconstruction weights, one per domain.
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub anneal_cap: Option<f64>,
    #[arg(long)]
    pub anneal_steps: Option<u64>,
    #[arg(long)]
    pub input_dropout: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub latent: Option<usize>,
    #[arg(long, value_enum)]
    pub objective: Option<ObjectiveArg>,
    /// Drop the standard-normal expert from the product.
    #[arg(long)]
    pub no_prior: bool,
    /// Count single-domain users once under the sub-sampled objective.
    #[arg(long)]
    pub dedup_single_domain: bool,
    /// Train a single-domain model on this dataset domain only.
    #[arg(long, conflicts_with = "concat")]
    pub only_domain: Option<usize>,
    /// Train a single-domain model on the concatenation of all domains.
    #[arg(long)]
    pub concat: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint directory; not needed for `baseline-popularity`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: EvalMode,
    #[arg(long)]
    pub source: Option<usize>,
    #[arg(long)]
    pub target: Option<usize>,
    /// Comma-separated cutoffs.
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long, value_enum)]
    pub target_ground_truth: Option<GroundTruthArg>,
    #[arg(long, value_enum)]
    pub source_history: Option<SourceHistoryArg>,
}

#[derive(Debug, Args)]
pub struct ParetoArgs {
    /// `report.json` files written by `eval`.
    #[arg(long = "report", num_args = 1.., required = true)]
    pub reports: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "ndcg")]
    pub metric: MetricArg,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EvalMode {
    Single,
    Cross,
    BaselinePopularity,
    BaselineConcat,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::Single => "single",
            EvalMode::Cross => "cross",
            EvalMode::BaselinePopularity => "baseline-popularity",
            EvalMode::BaselineConcat => "baseline-concat",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Recall,
    Ndcg,
}

impl MetricArg {
    pub fn name(self) -> &'static str {
        match self {
            MetricArg::Recall => "recall",
            MetricArg::Ndcg => "ndcg",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum UserFilterArg {
    AcrossDomains,
    PerDomain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    JointOnly,
    Subsampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GroundTruthArg {
    HeldOut,
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SourceHistoryArg {
    Full,
    FoldIn,
}

/// Runs one parsed command and returns the text meant for stdout.
pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Prepare(a) => cmd_prepare(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Pareto(a) => cmd_pareto(a),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Result<String>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli =
        Cli::try_parse_from(args).map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
    execute(&cli)
}

/// `{"error": {"kind": ..., "message": ...}}`
pub fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({"error": {"kind": kind, "message": message}}).to_string()
}
