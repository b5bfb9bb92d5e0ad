//! Command-line entry point. Exit codes: 0 success, 1 usage/config error,
//! 2 data error while processing.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use sepkit_cli::config::{PipelineConfig, StageName};
use sepkit_cli::error::CliError;
use sepkit_cli::run_stages;

#[derive(Parser)]
#[command(name = "sepkit", version, about = "Synthesize, enhance, and score speech corpora")]
struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Worker threads; defaults to one per core.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Regenerate outputs that already exist.
    #[arg(long, global = true)]
    force: bool,

    /// Override the config's seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus.
    Simulate,
    /// Run the enhancement chain over the corpus.
    Enhance,
    /// Score estimates against references.
    Score,
    /// Run the configured `stages` in order.
    Run,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let config_path = cli
        .config
        .ok_or_else(|| CliError::config("--config <PATH> is required"))?;
    let mut cfg = PipelineConfig::load(&config_path)?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::config("--jobs must be >= 1"));
        }
        cfg.jobs = Some(jobs);
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }

    let stage_list: Vec<StageName> = match cli.command {
        Command::Simulate => vec![StageName::Simulate],
        Command::Enhance => vec![StageName::Enhance],
        Command::Score => vec![StageName::Score],
        Command::Run => {
            if cfg.stages.is_empty() {
                return Err(CliError::config("run needs a nonempty `stages` list in the config"));
            }
            cfg.stages.clone()
        }
    };
    run_stages(&cfg, &stage_list, cli.force)
}
