use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

/// Two-photon quantum walks in coupled waveguide arrays.
#[derive(Debug, Parser)]
#[command(name = "qwalk", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Single-photon output distributions per input waveguide and length.
    Simulate(RunArgs),
    /// Quantum and classical two-photon correlation matrices.
    Correlations(RunArgs),
    /// Violation matrices from theory, or V and V/σ from coincidence counts.
    Violations(RunArgs),
    /// Maximum violation against total propagation length.
    Sweep(RunArgs),
    /// Fit edge-perturbation parameters to coincidence counts.
    Fit(RunArgs),
    /// Similarity of two matrix or counts files, printed to stdout.
    Similarity {
        file_a: PathBuf,
        file_b: PathBuf,
        /// `full`, `even-odd` or a `j,k` CSV path.
        #[arg(long)]
        mask: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Coincidence counts CSV files (`j,k,counts`).
    #[arg(long, num_args = 1..)]
    pub counts: Vec<PathBuf>,
    /// Output directory; overrides the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `full`, `even-odd` or a `j,k` CSV path; overrides the configuration.
    #[arg(long)]
    pub mask: Option<String>,
    /// Sweep grid `start:stop:step` in μm; overrides the configuration.
    #[arg(long)]
    pub grid: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Correlations(a) => commands::correlations(a),
        Command::Violations(a) => commands::violations(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Fit(a) => commands::fit(a),
        Command::Similarity { file_a, file_b, mask } => commands::similarity(file_a, file_b, mask.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qwalk: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
