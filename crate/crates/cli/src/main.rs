use std::path::PathBuf;
use std::process::ExitCode;

use cachemod_cli::{emit_csv, parse_config, run_scenario, write_csv, CliError, ScenarioConfig};
use clap::{Parser, Subcommand};

/// Cache-aided modulation scenarios over a Gaussian broadcast channel.
#[derive(Debug, Parser)]
#[command(name = "cachemod", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Runs the analytic and Monte Carlo sweep and writes a CSV table
    Run {
        /// Scenario file (JSON)
        #[arg(long)]
        config: PathBuf,
        /// Output CSV; overrides the config, stdout when neither is set
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed
        #[arg(long)]
        seed: Option<u64>,
        /// Monte Carlo trials per cell
        #[arg(long)]
        trials: Option<u64>,
        /// Skip the Monte Carlo estimates
        #[arg(long)]
        analytic_only: bool,
    },
    /// Checks a scenario file without running it
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &PathBuf) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config("config", format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = load(&config)?;
            eprintln!(
                "{}: {} users, {} files, {} scheme(s), {} SNR points",
                config.display(),
                cfg.num_users(),
                cfg.library.num_files(),
                cfg.schemes.len(),
                cfg.sweep_points().len()
            );
            Ok(())
        }
        Command::Run {
            config,
            out,
            seed,
            trials,
            analytic_only,
        } => {
            let mut cfg = load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(trials) = trials {
                cfg.trials_per_cell = trials;
            }
            if analytic_only {
                cfg.trials_per_cell = 0;
            }
            let results = run_scenario(&cfg)?;
            match out.or(cfg.output) {
                Some(path) => emit_csv(&results, &path),
                None => write_csv(&results, std::io::stdout().lock()),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
