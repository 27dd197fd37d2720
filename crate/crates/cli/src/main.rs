//! `lc`: dataset generation, training, evaluation, oracle checks and run reports.

mod error;
mod evaluate;
mod gen_data;
mod oracle_check;
mod report;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use error::CliError;

#[derive(Parser)]
#[command(name = "lc", version, about = "Logit-correction debiasing toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a biased dataset file.
    GenData(gen_data::Args),
    /// Train the two-branch model on a dataset file.
    Train(train::Args),
    /// Score a checkpoint on a dataset split.
    Evaluate(evaluate::Args),
    /// Compare surrogate minimizers with brute-force GBA maximizers.
    OracleCheck(oracle_check::Args),
    /// Merge run summaries into one CSV table.
    Report(report::Args),
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("LC_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("LC_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("LC_THREADS: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::GenData(args) => gen_data::run(args),
        Command::Train(args) => train::run(args),
        Command::Evaluate(args) => evaluate::run(args),
        Command::OracleCheck(args) => oracle_check::run(args),
        Command::Report(args) => report::run(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
