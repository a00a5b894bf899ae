use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mrfil_cli::commands;
use mrfil_cli::config::ExperimentConfig;
use mrfil_cli::{exit_code, exit_code_for};

/// Imitation learning with an ensemble-dynamics reward: demo generation,
/// model training, offline pre-training, online training, exact verification
/// of the underlying bounds, and multi-run reports.
#[derive(Parser)]
#[command(name = "mrfil", version, about)]
struct Cli {
    /// Experiment config file (INI). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the run seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides the output directory from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate expert demonstrations and the train/eval split.
    GenDemos,
    /// Train the single dynamics model and the ensemble; calibrate the reward.
    TrainDynamics,
    /// Behavioral cloning plus offline multi-branch short-rollout pre-training.
    Pretrain,
    /// Online training in the real environment with ensemble rewards.
    Train,
    /// Run the exact verification battery over random tabular instances.
    Verify,
    /// Aggregate completed runs into comparison tables and curves.
    Report {
        /// Run directories containing metrics.csv (and eval.csv).
        dirs: Vec<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, mrfil_core::Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.run.out_dir = out.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code::USAGE as u8);
        }
    };
    // Keep a verbatim copy of the source config next to the canonical echo.
    if let Some(path) = &cli.config {
        if std::fs::create_dir_all(&cfg.run.out_dir).is_ok() {
            let _ = std::fs::copy(path, cfg.run.out_dir.join("config.source.ini"));
        }
    }
    let result = match &cli.command {
        Command::GenDemos => commands::cmd_gen_demos(&cfg),
        Command::TrainDynamics => commands::cmd_train_dynamics(&cfg),
        Command::Pretrain => commands::cmd_pretrain(&cfg),
        Command::Train => commands::cmd_train(&cfg),
        Command::Verify => match commands::cmd_verify(&cfg) {
            Ok(0) => Ok(()),
            Ok(violations) => {
                eprintln!("verification failed: {violations} violations");
                return ExitCode::from(exit_code::VERIFICATION_VIOLATION as u8);
            }
            Err(e) => Err(e),
        },
        Command::Report { dirs } => commands::cmd_report(dirs, &cfg.run.out_dir),
    };
    match result {
        Ok(()) => ExitCode::from(exit_code::OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e) as u8)
        }
    }
}
