use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use toepcov_cli::{load_config, run_experiment, write_table, CliError, ExperimentKind};

/// Run a covariance-estimation experiment and write its table as CSV.
#[derive(Parser)]
#[command(name = "toepcov", version)]
struct Args {
    /// Experiment kind; must match the config's `kind`.
    kind: ExperimentKind,
    #[arg(long)]
    config: PathBuf,
    /// Output CSV; defaults to the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's `base_seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn run(args: Args) -> Result<(), CliError> {
    let mut cfg = load_config(&args.config)?;
    if cfg.kind != args.kind {
        return Err(CliError::config("kind", format!("config says {} but the command is {}", cfg.kind, args.kind)));
    }
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    let out = args
        .out
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| CliError::config("output", "no --out given and the config sets no output"))?;
    let table = run_experiment(&cfg)?;
    write_table(&table, &out)
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
