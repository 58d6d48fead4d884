use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mnb::cli::{dispatch, error_line, ok_line, RunConfig};

#[derive(Parser)]
#[command(name = "mnb", version, about = "Recognition-memory benchmark for pixel transformers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quantize images into a token container, or generate synthetic stimuli.
    Prepare(Common),
    /// Train a model on a corpus and save a checkpoint.
    Pretrain(Common),
    /// Build experiments, train on the study set and score every trial.
    Run(Common),
    /// Aggregate results across runs and draw the figure.
    Report(Common),
    /// Draw images from a checkpoint.
    Sample(Common),
}

#[derive(Args)]
struct Common {
    /// Config file (`key = value` lines) or a previous manifest.json.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn build_config(c: &Common) -> mnb::Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::new(),
    };
    for pair in &c.set {
        cfg.set_pair(pair)?;
    }
    if let Some(seed) = c.seed {
        cfg.set("seed", seed.to_string())?;
    }
    if let Some(dir) = &c.out_dir {
        cfg.set("out_dir", dir.display().to_string())?;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (verb, common) = match &cli.command {
        Command::Prepare(c) => ("prepare", c),
        Command::Pretrain(c) => ("pretrain", c),
        Command::Run(c) => ("run", c),
        Command::Report(c) => ("report", c),
        Command::Sample(c) => ("sample", c),
    };
    match build_config(common).and_then(|cfg| dispatch(verb, &cfg)) {
        Ok(out) => {
            println!("{}", ok_line(verb, &out));
            ExitCode::SUCCESS
        }
        Err(e) => {
            println!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}
