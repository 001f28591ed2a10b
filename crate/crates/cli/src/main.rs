use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use eigenscape_cli::{run_file, Command, DistanceKind, Overrides};

/// Landscape experiments for the Brockett cost on the Stiefel manifold.
#[derive(Debug, Parser)]
#[command(name = "eigenscape", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON experiment spec.
    #[arg(long)]
    spec: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_enum)]
    distance: Option<DistanceKind>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let overrides = Overrides {
        seed: args.seed,
        trials: args.trials,
        distance: args.distance,
    };
    match run_file(args.command, &args.spec, &args.out, overrides) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("eigenscape: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
