use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use hjlab::runner::{run_experiment, RunOptions};

/// Finite-difference laboratory for the viscous equation
/// u_t - lap(u) + |grad u|^m = f: evolutions, steady states, critical-level
/// ladders, solvability sweeps, and Monte Carlo cross-checks, driven by TOML
/// configs.
#[derive(Parser)]
#[command(name = "hjlab", version)]
struct Cli {
    /// Experiment config (TOML)
    config: PathBuf,
    /// Override the config's output directory
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Multiply per-axis node counts, e.g. 2.0 for a refinement study
    #[arg(long, default_value_t = 1.0)]
    grid_scale: f64,
    /// Override the config's RNG seed
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = RunOptions {
        output_dir: cli.output_dir,
        grid_scale: cli.grid_scale,
        seed: cli.seed,
    };
    match run_experiment(&cli.config, &opts) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            eprintln!("artifacts: {}", outcome.dir.display());
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
