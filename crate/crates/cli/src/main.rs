mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Text-conditioned motion synthesis with dense-validation GANs.
#[derive(Parser, Debug)]
#[command(name = "dvgan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Processed dataset directory, defaulting to `$DVGAN_DATA_ROOT`.
#[derive(Args, Debug)]
struct DataArg {
    #[arg(long, env = "DVGAN_DATA_ROOT")]
    data: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the synthetic three-action BVH corpus.
    Synth(SynthArgs),
    /// Convert a raw BVH dataset to exponential maps at the training rate.
    Preprocess(PreprocessArgs),
    /// Train a generator and critic with WGAN-GP.
    TrainGan(TrainGanArgs),
    /// Train a description/animation ranker.
    TrainRanker(TrainRankerArgs),
    /// Sample animations for a sentence.
    Generate(GenerateArgs),
    /// Continue ground-truth seed frames with the recurrent generator.
    Complete(CompleteArgs),
    /// Inception score, retrieval recall and completion error.
    Evaluate(EvaluateArgs),
    /// Write processed clips back out as BVH and CSV.
    Export(ExportArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// TOML file with synthetic-corpus settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    clips: Option<usize>,
    #[arg(long)]
    seconds: Option<f64>,
    #[arg(long)]
    capture_rate: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    /// Raw dataset root with descriptions.tsv and train/, test/.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Target frame rate f in Hz; must divide the capture rate.
    #[arg(long)]
    frame_rate: f64,
    /// Fail on the first unreadable file instead of skipping it.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug)]
pub struct TrainGanArgs {
    #[command(flatten)]
    data: DataArg,
    /// Run directory for the log, checkpoints and effective config.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    d_steps: Option<u32>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_parser = ["cnn", "rnn"])]
    generator: Option<String>,
    #[arg(long, value_parser = ["cnn", "rnn"])]
    discriminator: Option<String>,
    #[arg(long)]
    final_cut: Option<bool>,
    #[arg(long)]
    augment: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
}

#[derive(Args, Debug)]
pub struct TrainRankerArgs {
    #[command(flatten)]
    data: DataArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["cnn", "rnn"])]
    mode: Option<String>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    /// Candidates K per training example.
    #[arg(long)]
    candidates: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Action sentence; unseen words map to <unk>.
    #[arg(long)]
    text: String,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Clip length for the recurrent generator; defaults to the trained N.
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = ["bvh", "csv", "both"], default_value = "both")]
    format: String,
}

#[derive(Args, Debug)]
pub struct CompleteArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArg,
    #[arg(long, default_value_t = 25)]
    seed_frames: usize,
    /// Total output frames, seed included; defaults to the trained N.
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long, default_value = "test")]
    split: String,
    /// Complete at most this many clips.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',')]
    horizons_ms: Option<Vec<f64>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    data: DataArg,
    #[arg(long)]
    ranker: PathBuf,
    /// Generator checkpoint; without it only real test clips are scored.
    #[arg(long)]
    gan: Option<PathBuf>,
    /// Size of the description pool.
    #[arg(long, default_value_t = 15)]
    k: usize,
    /// Generated clips per pooled description.
    #[arg(long, default_value_t = 50)]
    samples: usize,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 25)]
    seed_frames: usize,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    horizons_ms: Option<Vec<f64>>,
    /// Report path (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[command(flatten)]
    data: DataArg,
    #[arg(long, default_value = "test")]
    split: String,
    /// Only this clip id.
    #[arg(long)]
    id: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = ["bvh", "csv", "both"], default_value = "both")]
    format: String,
}

/// `error[<code>]: <message>` on one line.
fn error_line(e: &anyhow::Error) -> String {
    let code = e
        .chain()
        .find_map(|c| c.downcast_ref::<dvgan_core::Error>())
        .map_or("cli", |d| d.code());
    // Library errors already print their source; skip causes repeated verbatim.
    let mut msg = String::new();
    for part in e.chain().map(|c| c.to_string()) {
        if msg.ends_with(&part) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&part);
    }
    let msg = msg.replace(['\n', '\r'], " ");
    format!("error[{code}]: {msg}")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Preprocess(a) => commands::preprocess(a),
        Command::TrainGan(a) => commands::train_gan(a),
        Command::TrainRanker(a) => commands::train_ranker(a),
        Command::Generate(a) => commands::generate(a),
        Command::Complete(a) => commands::complete(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Export(a) => commands::export(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}
