mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "msgwnn", version, about = "Multi-scale graph wavelet neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a patch graph from an RGB image (PNG or PPM).
    BuildGraph(BuildGraphArgs),
    /// Write wavelet columns and receptive-field summaries for a graph.
    Wavelet(WaveletArgs),
    /// Generate the synthetic multi-scale dataset with a train/test split.
    Synth(SynthArgs),
    /// Train a model and write a checkpoint plus per-epoch metrics.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Train one model per scale set or node-loss weight and report test accuracy.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
struct BuildGraphArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    image: Option<PathBuf>,
    #[arg(long)]
    patch: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct WaveletArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Comma-separated scales, e.g. `1,3,5`.
    #[arg(long)]
    scales: Option<String>,
    #[arg(long)]
    center: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    samples_per_class: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Comma-separated blob sizes, e.g. `1,2,4`.
    #[arg(long)]
    blob_scales: Option<String>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
}

/// Model and optimizer settings shared by `train` and `ablate`.
#[derive(Debug, Args, Clone, Default)]
struct ModelArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated branch scales, e.g. `0.5,1.0,1.5`.
    #[arg(long)]
    scales: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Chebyshev order.
    #[arg(long)]
    k: Option<usize>,
    /// `exact` or `chebyshev`.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Comma-separated hidden widths, e.g. `256,128`.
    #[arg(long)]
    hidden: Option<String>,
    /// `gwnn` or `gcn`.
    #[arg(long)]
    branch: Option<String>,
    #[arg(long)]
    readout_affine: Option<bool>,
    /// `graph` (stored adjacency) or `similarity` (rebuilt from embeddings).
    #[arg(long)]
    topology: Option<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Dataset directory or manifest.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Evaluation JSON path; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// `scales` or `lambda`.
    #[arg(long)]
    param: String,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    test_data: Option<PathBuf>,
    /// Semicolon-separated scale sets, e.g. `0.5;0.5,1.0;0.5,1.0,1.5`.
    #[arg(long)]
    scale_sets: Option<String>,
    /// Comma-separated node-loss weights.
    #[arg(long)]
    lambdas: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::BuildGraph(a) => commands::build_graph(a),
        Command::Wavelet(a) => commands::wavelet(a),
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Ablate(a) => commands::ablate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
