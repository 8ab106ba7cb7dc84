//! `hemi` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hemi::ErrorKind;

use commands::Run;
use config::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(name = "hemi", version, about = "Heterogeneous graph embeddings by mutual-information maximization")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Config file of `key = value` lines.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `-s epochs=200`. Repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    /// Output directory (`out_dir`).
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,

    /// Dataset directory (`data_dir`).
    #[arg(long, global = true)]
    data: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true)]
    epochs: Option<usize>,

    #[arg(long, global = true)]
    dim: Option<usize>,

    /// Comma-separated meta-paths, e.g. `written_by.~written_by`.
    #[arg(long, global = true)]
    metapaths: Option<String>,

    /// Suppress per-epoch logging.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Load the dataset and print its summary.
    IngestCheck,
    /// Write a planted-partition dataset and a matching config file.
    MakeSynthetic,
    /// Self-supervised training; writes embeddings, checkpoint and report.
    Train,
    /// Embed the dataset with a saved checkpoint.
    Embed,
    /// Linear-probe node classification on saved embeddings.
    EvalClassify,
    /// k-means clustering on saved embeddings.
    EvalCluster,
    /// Mask meta-path edges, train on the rest, and score the held-out links.
    EvalLinkpred,
    /// Train a supervised task with the self-supervised loss added.
    TrainAugmented,
}

fn build_config(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Ok(seed) = std::env::var("HEMI_SEED") {
        config.set("seed", &seed)?;
    }
    for pair in &cli.set {
        config.set_pair(pair)?;
    }
    let path = |p: &PathBuf| p.to_string_lossy().into_owned();
    let flags = [
        ("out_dir", cli.out.as_ref().map(path)),
        ("data_dir", cli.data.as_ref().map(path)),
        ("seed", cli.seed.map(|v| v.to_string())),
        ("epochs", cli.epochs.map(|v| v.to_string())),
        ("dim", cli.dim.map(|v| v.to_string())),
        ("metapaths", cli.metapaths.clone()),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            config.set(key, &v)?;
        }
    }
    Ok(config)
}

fn exit_code(error: &anyhow::Error) -> u8 {
    if error.downcast_ref::<ConfigError>().is_some() {
        return 1;
    }
    match error.downcast_ref::<hemi::Error>().map(hemi::Error::kind) {
        Some(ErrorKind::Config) => 1,
        Some(ErrorKind::Numeric) => 3,
        Some(ErrorKind::Data) | None => 2,
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let ctx = Run {
        config: build_config(cli)?,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::IngestCheck => commands::ingest_check(&ctx),
        Command::MakeSynthetic => commands::make_synthetic_cmd(&ctx),
        Command::Train => commands::train(&ctx),
        Command::Embed => commands::embed_cmd(&ctx),
        Command::EvalClassify => commands::eval_classify(&ctx),
        Command::EvalCluster => commands::eval_cluster(&ctx),
        Command::EvalLinkpred => commands::eval_linkpred(&ctx),
        Command::TrainAugmented => commands::train_augmented(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
