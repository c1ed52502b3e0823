use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

mod commands;
mod config;
mod output;

/// Fault-tolerance workbench for quantized DNN arithmetic.
#[derive(Parser)]
#[command(name = "ftqnn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure multiplier MARE over a grid of configurations.
    Characterize { config: PathBuf },
    /// Quantize a model's weights and write the stored tensors.
    Quantize { config: PathBuf },
    /// Run fault-injection campaigns and write a reliability report.
    Campaign { config: PathBuf },
    /// Run the bit-width search and write its trace and summary.
    Dse { config: PathBuf },
    /// Aggregate campaign reports per protection and BER.
    Report { config: PathBuf },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("no bit width passed both thresholds")]
    NoPassingWidth,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::NoPassingWidth => 4,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Characterize { config } => commands::characterize(config),
        Command::Quantize { config } => commands::quantize(config),
        Command::Campaign { config } => commands::campaign(config),
        Command::Dse { config } => commands::dse(config),
        Command::Report { config } => commands::report(config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ftqnn: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
