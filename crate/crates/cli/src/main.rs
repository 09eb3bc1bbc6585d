//! `feeder-marl`: train, evaluate and compare feeder voltage controllers.
//!
//! Exit codes: 0 success, 1 I/O or other failure, 2 invalid config or
//! scenario, 3 training aborted, 4 checkpoint does not fit the scenario,
//! 5 compared runs are missing or have different shapes.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Code, Failure, Run, EXIT_CONFIG, EXIT_OTHER};
use config::Preset;

#[derive(Parser)]
#[command(name = "feeder-marl", version = env!("FEEDER_MARL_VERSION"), about)]
struct Cli {
    /// Caps the worker pool; ignored in sequential builds.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// JSON run config; keys override the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Master seed; replaces `scenario.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one PPO agent per RL building.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// Continue from the checkpoint in OUT if there is one.
        #[arg(long)]
        resume: bool,
        /// Stop after saving the checkpoint of this update.
        #[arg(long, hide = true)]
        halt_after: Option<usize>,
    },
    /// Run one episode with trained policies.
    Evaluate {
        /// Training output directory or its checkpoint subdirectory.
        checkpoint: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one episode with every building under the rule-based controller.
    Baseline {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate violations of RUN against BASELINE.
    Compare {
        baseline: PathBuf,
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Resolve a config and print it with its hash.
    ValidateConfig {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn resolve(args: &ConfigArgs, out: PathBuf) -> Result<Run, Failure> {
    let config = config::load(args.config.as_deref(), args.preset, args.seed).code(EXIT_CONFIG)?;
    Ok(Run { config, config_path: args.config.clone(), out })
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        feeder_marl::par::init_threads(n).map_err(anyhow::Error::msg).code(EXIT_OTHER)?;
    }
    match cli.command {
        Command::Train { cfg, out, resume, halt_after } => commands::train(&resolve(&cfg, out)?, resume, halt_after),
        Command::Evaluate { checkpoint, cfg, out } => commands::evaluate(&resolve(&cfg, out)?, &checkpoint),
        Command::Baseline { cfg, out } => commands::baseline(&resolve(&cfg, out)?),
        Command::Compare { baseline, run, out } => commands::compare_runs(&baseline, &run, &out),
        Command::ValidateConfig { cfg } => {
            let run = resolve(&cfg, PathBuf::new())?;
            let doc = serde_json::json!({ "config_hash": run.config.hash(), "config": run.config });
            println!("{}", serde_json::to_string_pretty(&doc).code(EXIT_OTHER)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
