use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use musanet::data::{Split, Task};

#[derive(Parser, Debug)]
#[command(name = "musanet", version, about = "Multi-level self-attention models for patient journeys")]
pub struct Cli {
    /// Print the effective configuration as JSON and exit
    #[arg(long, global = true)]
    pub dump_config: bool,

    /// Worker threads (results do not depend on this)
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic cohort as JSONL plus vocabulary and category files
    GenData(GenDataArgs),
    /// Train a model and write a checkpoint
    Train(TrainArgs),
    /// Score a checkpoint on a data split
    Evaluate(EvaluateArgs),
    /// Metric per input visit count on a data split
    Robustness(RobustnessArgs),
    /// Finite-difference check of the full model's gradients
    Gradcheck(GradcheckArgs),
    /// Export per-patient visit and code importance
    Explain(ExplainArgs),
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// Output directory for data.jsonl, vocab.txt and categories.tsv
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 7499)]
    pub patients: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Generator settings as JSON; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Dataset location shared by the commands that read data.
#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Journeys in JSONL form
    #[arg(long)]
    pub data: PathBuf,
    /// Fixed vocabulary, one code per line
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Code-to-category TSV (default: categories.tsv next to the data)
    #[arg(long)]
    pub categories: Option<PathBuf>,
    /// Codes seen in fewer visits are dropped when no vocabulary is given
    #[arg(long, default_value_t = musanet::data::DEFAULT_MIN_COUNT)]
    pub min_count: usize,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Checkpoint path
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "readm")]
    pub task: TaskArg,
    #[arg(long, default_value_t = 128)]
    pub d: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 16)]
    pub max_visits: usize,
    #[arg(long, default_value_t = 32)]
    pub max_codes: usize,
    #[arg(long, default_value_t = 0.1)]
    pub dropout: f64,
    /// Largest day offset with its own interval encoding
    #[arg(long, default_value_t = 1000)]
    pub max_interval: usize,
    /// Stacked attention blocks per direction
    #[arg(long, default_value_t = 1)]
    pub depth: usize,
    /// Replace the directional masks with zeros
    #[arg(long)]
    pub no_posmask: bool,
    /// Skip interval encoding
    #[arg(long)]
    pub no_interval: bool,
    /// Sum instead of attention pooling
    #[arg(long)]
    pub no_attn_pool: bool,
    /// Optional metrics report on the validation split
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskArg {
    Readm,
    Dx,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Readm => Task::Readmission,
            TaskArg::Dx => Task::Diagnosis,
        }
    }
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitArg {
    Train,
    Valid,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Valid => Split::Valid,
            SplitArg::Test => Split::Test,
        }
    }
}

/// Checkpoint plus the data split to score.
#[derive(Args, Debug)]
pub struct ScoredArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Code-to-category TSV for diagnosis checkpoints that lack one
    #[arg(long)]
    pub categories: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Split seed (default: the checkpoint's seed)
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub scored: ScoredArgs,
    /// Cut-offs for precision@k
    #[arg(long, value_delimiter = ',', default_values_t = musanet::train::DEFAULT_KS)]
    pub k: Vec<usize>,
    /// Report path (default: standard output)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RobustnessArgs {
    #[command(flatten)]
    pub scored: ScoredArgs,
    #[arg(long, default_value_t = 6)]
    pub min_length: usize,
    #[arg(long, default_value_t = 16)]
    pub max_length: usize,
    /// Cut-off for the diagnosis metric
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 4)]
    pub d: usize,
    #[arg(long, default_value_t = 3)]
    pub visits: usize,
    #[arg(long, default_value_t = 2)]
    pub codes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest accepted relative error
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

#[derive(Args, Debug)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub scored: ScoredArgs,
    /// Patients to export (default: all)
    #[arg(long)]
    pub limit: Option<usize>,
    /// JSONL output (default: standard output)
    #[arg(long)]
    pub out: Option<PathBuf>,
}
