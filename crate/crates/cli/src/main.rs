//! `mmot`: solve, inspect and re-verify multi-marginal transport runs.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 solver error. `MMOT_THREADS` caps the worker pool.

mod config;
mod run;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use run::{config_err, Failure, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "mmot", version, about = "Multi-marginal optimal transport with barycenter costs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the cost tensor, solve, verify and write a run directory.
    Solve {
        #[arg(short, long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compute the weighted Fréchet mean of a point set.
    Karcher {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Re-run every check on an existing run directory.
    Verify { run_dir: PathBuf },
    /// Write the marginals a config describes, without solving.
    Gen {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn init_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("MMOT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| config_err(anyhow::anyhow!("MMOT_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(config_err)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = init_threads().and_then(|()| match cli.command {
        Command::Solve { config, output } => run::solve(&config, output),
        Command::Karcher { config, output } => run::karcher(&config, output),
        Command::Verify { run_dir } => run::verify(&run_dir),
        Command::Gen { config, output } => run::gen(&config, output),
    });
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            let kind = if f.code == EXIT_CONFIG { "config error" } else { "solver error" };
            eprintln!("{kind}: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
