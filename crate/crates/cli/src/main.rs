mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use adc_core::AdcError;
use clap::{Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Failure {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("missing {0}")]
    MissingInput(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl From<AdcError> for Failure {
    fn from(e: AdcError) -> Self {
        match e {
            AdcError::InvalidConfig { .. } => Failure::Config(e.to_string()),
            AdcError::Io {
                ref source,
                ref path,
            } if source.kind() == std::io::ErrorKind::NotFound => {
                Failure::MissingInput(path.display().to_string())
            }
            other => Failure::Other(other.into()),
        }
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::MissingInput(_) => 3,
            Failure::Other(_) => 1,
        }
    }
}

/// Training-free adaptive diversity cache for long-tailed predictions.
#[derive(Parser)]
#[command(name = "adc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML file with [adc], [stream] and [sweep] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Prediction records (JSONL with a header line).
    #[arg(long, global = true)]
    input: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "adc-out")]
    out: PathBuf,

    /// Root seed; module seeds are derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override a config value, e.g. `--set tau=0.3` or `--set stream.dim=64`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic long-tailed stream and adapt on it.
    Synth {
        /// Also write the generated records.
        #[arg(long)]
        save_stream: bool,
        /// Also write the fused logits.
        #[arg(long)]
        save_logits: bool,
    },
    /// Adapt on recorded base-model predictions.
    Replay,
    /// Run a grid of configurations and summarise them.
    Sweep,
    /// Adapt, then dump the final cache.
    ExportCache,
}

fn run(cli: Cli) -> Result<(), Failure> {
    let resolved = config::resolve(cli.config.as_deref(), &cli.overrides, cli.seed)?;
    let (save_stream, save_logits) = match cli.command {
        Command::Synth {
            save_stream,
            save_logits,
        } => (save_stream, save_logits),
        _ => (false, false),
    };
    let opts = commands::Options {
        out: &cli.out,
        input: cli.input.as_deref(),
        save_stream,
        save_logits,
    };
    match cli.command {
        Command::Synth { .. } => commands::synth(&resolved, &opts),
        Command::Replay => commands::replay(&resolved, &opts),
        Command::Sweep => commands::sweep(&resolved, &opts),
        Command::ExportCache => commands::export_cache(&resolved, &opts),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}
