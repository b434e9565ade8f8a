mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use uniqode::error::Error;
use uniqode::identify::FormulaVariant;

#[derive(Debug, Parser)]
#[command(name = "uniqode", version, about = "Identifiability certificates and neural fits for ODE inverse problems")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Seed overriding every seed in the configuration (and UNIQODE_SEED).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Reading of the radius formulas.
    #[arg(long, global = true)]
    pub formula_variant: Option<FormulaVariant>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Mode {
    Direct,
    Upinn,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the configured system and write trajectory.csv.
    Simulate,
    /// Search matched pairs and recover the unknowns exactly (certificate.json).
    Identify {
        #[arg(long)]
        data: PathBuf,
    },
    /// Error radii for approximately matched pairs (bounds.json).
    Bounds {
        #[arg(long)]
        data: PathBuf,
    },
    /// Train the unknowns on a data file (fit.json, loss.csv).
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "direct")]
        mode: Mode,
    },
    /// Rerun a case (case1..case5) or regenerate a table (table1..table4).
    Reproduce { id: String },
    /// Case 4 over noise levels (table1.csv, table2.csv).
    SweepNoise {
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Case 5 over dataset lengths (table3.csv, table4.csv).
    SweepLength {
        #[arg(long, value_delimiter = ',')]
        lengths: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
}

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IDENTIFIABILITY: u8 = 3;
pub const EXIT_DATA: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Usage(_) | Error::Parse { .. } | Error::Json(_) => EXIT_CONFIG,
        Error::Data(_) | Error::Shape(_) => EXIT_DATA,
        e if e.is_identifiability() => EXIT_IDENTIFIABILITY,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
