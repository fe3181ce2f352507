use std::path::PathBuf;
use std::process::ExitCode;

use cascade_opo::runner::{self, Command, Overrides};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cascade-opo", version, about = "Pulsed cascaded OPO simulations")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Run configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true, value_name = "S")]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Run the configured engine and export all requested observables.
    Simulate,
    /// Integrate the master equation on the full density matrix.
    Oracle,
    /// Positive-P stochastic ensemble.
    Semiclassical,
    /// Linear stability report and bisected threshold.
    Threshold,
    /// Wigner grids of the subharmonic mode only.
    Wigner,
    /// Perturbative polarization triplet.
    Triplet,
    /// Effective coupling of a segmented crystal.
    Coupling,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::Simulate => Command::Simulate,
        Cmd::Oracle => Command::Oracle,
        Cmd::Semiclassical => Command::Semiclassical,
        Cmd::Threshold => Command::Threshold,
        Cmd::Wigner => Command::Wigner,
        Cmd::Triplet => Command::Triplet,
        Cmd::Coupling => Command::Coupling,
    };
    let overrides = Overrides {
        seed: cli.seed,
        workers: cli.workers,
    };
    match runner::execute(command, cli.config.as_deref(), &cli.out, overrides) {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            println!("wrote {} files to {}", outcome.files.len(), cli.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let runner::RunError::Config(c) = &e {
                for v in c.violations() {
                    eprintln!("  {v}");
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
