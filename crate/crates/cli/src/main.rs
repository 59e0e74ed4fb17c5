//! `mtree`: canonicalize expressions, encode and decode M-tree codes, build
//! supervision, and train or run the seq2code model.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "mtree", version, about)]
struct Cli {
    /// JSON configuration file; flags take precedence over its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the canonical M-tree of an expression and its value.
    Canonicalize(CanonicalizeArgs),
    /// Encode every problem of a corpus into M-tree codes (JSON lines).
    Encode(EncodeArgs),
    /// Decode a codes file back into answers.
    Decode(DecodeArgs),
    /// Write masked problems, code vectors and the code vocabulary.
    Preprocess(PreprocessArgs),
    /// Report code vocabulary size, coverage and operand counts.
    Stats(StatsArgs),
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Answer problems with a trained checkpoint.
    Predict(PredictArgs),
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Clone)]
pub struct CorpusArgs {
    /// Corpus file (JSON array, JSON lines or concatenated objects).
    #[arg(long)]
    pub input: PathBuf,
    /// Corpus schema: math23k-json, mawps-json or synthetic-json.
    #[arg(long)]
    pub format: Option<String>,
    /// Value used for the `pi` constant.
    #[arg(long)]
    pub pi: Option<f64>,
}

#[derive(Args, Debug)]
pub struct CanonicalizeArgs {
    pub expression: String,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Exit with an error if any record fails.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    /// Codes file written by `encode`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub strict: bool,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Held-out corpus; coverage is measured on it.
    #[arg(long)]
    pub test_input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub output: PathBuf,
    /// Also write a k-fold manifest over the training ids.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Also write a low-resource manifest keeping this fraction of ids.
    #[arg(long)]
    pub low_resource: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub test_input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Problems scored for answer accuracy after each epoch.
    #[arg(long)]
    pub dev_input: Option<PathBuf>,
    /// Checkpoint path.
    #[arg(long)]
    pub output: PathBuf,
    /// Training log (JSON lines); stdout when absent.
    #[arg(long)]
    pub log_output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Gradient-norm cap; 0 disables clipping.
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// sgd, momentum or adam.
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub attention_dim: Option<usize>,
    /// Generator hidden sizes, e.g. `2048,1024`.
    #[arg(long, value_delimiter = ',')]
    pub generator_dims: Option<Vec<usize>>,
    /// relu or tanh.
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long)]
    pub max_words: Option<usize>,
    /// Compute per-problem gradients in parallel (same results).
    #[arg(long)]
    pub parallel: bool,
    /// Record wall-clock seconds per epoch in the log.
    #[arg(long)]
    pub record_time: bool,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let file = match config::FileConfig::load(cli.config.as_deref()) {
        Ok(f) => f,
        Err(e) => return commands::report(commands::Failure::Input(e)),
    };
    let result = match cli.command {
        Command::Canonicalize(a) => commands::canonicalize(&a),
        Command::Encode(a) => commands::encode(&a, &file),
        Command::Decode(a) => commands::decode(&a, &file),
        Command::Preprocess(a) => commands::preprocess(&a, &file),
        Command::Stats(a) => commands::stats(&a, &file),
        Command::Train(a) => commands::train(&a, &file),
        Command::Predict(a) => commands::predict(&a, &file),
        Command::Synth(a) => commands::synth(&a, &file),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => commands::report(f),
    }
}
