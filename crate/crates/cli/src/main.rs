//! `xdec`: dataset generation, training, evaluation, inference and task
//! composition for the generalized decoder.

mod commands;
mod overlay;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "xdec", version, about = "Generalized decoding for segmentation and vision-language tasks")]
struct Cli {
    /// JSON run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the data and training seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic train and held-out splits.
    Datagen(DatagenArgs),
    /// Train a model and write a checkpoint plus a step log.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset and print the metric report.
    Eval(EvalArgs),
    /// Run one task on one image.
    Infer(InferArgs),
    /// Chain two tasks.
    Compose(ComposeArgs),
}

#[derive(Debug, Args)]
struct DatagenArgs {
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset directory (defaults to `<data.path>/train`).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Cap on optimizer steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Continue from a checkpoint; its configuration wins over --config.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Also write a checkpoint every N steps.
    #[arg(long)]
    save_every: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory (defaults to `<data.path>/eval`).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated subset of panoptic,semantic,instance,referring,retrieval,caption,vqa.
    #[arg(long, value_delimiter = ',')]
    tasks: Option<Vec<String>>,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    image: PathBuf,
    /// panoptic, semantic, instance, refer, caption, vqa or retrieval.
    #[arg(long)]
    task: String,
    #[arg(long)]
    phrase: Option<String>,
    #[arg(long)]
    question: Option<String>,
    /// Candidate texts for retrieval (repeatable).
    #[arg(long = "text")]
    texts: Vec<String>,
    /// Write a PNG overlay of the predicted masks.
    #[arg(long)]
    overlay: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ComposeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// refer-caption or region-retrieval.
    #[arg(long)]
    mode: String,
    /// Input image (repeatable for region-retrieval).
    #[arg(long = "image", required = true)]
    images: Vec<PathBuf>,
    /// Word or phrase to ground.
    #[arg(long)]
    phrase: String,
}

fn main() -> ExitCode {
    if let Ok(n) = std::env::var("XDEC_NUM_THREADS") {
        // candle's CPU kernels size their thread pool from this variable
        std::env::set_var("RAYON_NUM_THREADS", n);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: usage: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.class(), e.message().replace('\n', " "));
            ExitCode::from(e.code())
        }
    }
}
