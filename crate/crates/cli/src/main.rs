use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use floodlib::{Command, ExperimentConfig, Result};

#[derive(Parser)]
#[command(name = "floodlib", version, about = "Flood-regularized training experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Run this seed instead of the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root, overriding `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write train/val/test CSVs and a manifest.
    GenData(Common),
    /// Train fold models and write the flood table.
    TrainAux(Common),
    /// Train main models for every configured method.
    Train(Common),
    /// Re-evaluate saved main models.
    Evaluate(Common),
    /// Reliability data and ECE per method.
    Calibrate(Common),
    /// Brute-force check of the AdaFlood minimizer argument.
    PropositionCheck(Common),
    /// Compare scratch and fine-tuned auxiliary models.
    AblateFinetune(Common),
}

fn run(cli: Cli) -> Result<PathBuf> {
    let (command, common) = match cli.command {
        Cmd::GenData(c) => (Command::GenData, c),
        Cmd::TrainAux(c) => (Command::TrainAux, c),
        Cmd::Train(c) => (Command::Train, c),
        Cmd::Evaluate(c) => (Command::Evaluate, c),
        Cmd::Calibrate(c) => (Command::Calibrate, c),
        Cmd::PropositionCheck(c) => (Command::PropositionCheck, c),
        Cmd::AblateFinetune(c) => (Command::AblateFinetune, c),
    };
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seeds = vec![s];
    }
    if let Some(o) = common.out {
        cfg.out_dir = o;
    }
    log::info!("{} {}", command.name(), cfg.name);
    command.run(&cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{}", summary.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
