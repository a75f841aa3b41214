use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lmm_pricer::{format_table, parse_config, run, write_csv_atomic, CliError};

/// Prices caplets and swaptions on full or sparse grids and prints
/// convergence tables.
#[derive(Debug, Parser)]
#[command(name = "price", version)]
struct Args {
    /// Run configuration file.
    config: PathBuf,

    /// Write the table as CSV to PATH (overrides the config).
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,

    /// Worker threads (overrides the config).
    #[arg(long, value_name = "K", value_parser = clap::value_parser!(u64).range(1..))]
    threads: Option<u64>,

    /// Suppress the text table and warnings.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("price: {}: {e}", args.config.display());
            ExitCode::FAILURE
        }
    }
}

fn execute(args: &Args) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.config).map_err(|source| CliError::Io { path: args.config.clone(), source })?;
    let mut config = parse_config(&text)?;
    if let Some(t) = args.threads {
        config.solver.threads = Some(t as usize);
    }
    if let Some(p) = &args.csv {
        config.output.csv = Some(p.clone());
    }
    let output = run(&config)?;
    if !args.quiet {
        for w in &output.warnings {
            eprintln!("warning: outflow condition not met: {w}");
        }
        print!("{}", format_table(&output.rows));
    }
    if let Some(path) = &config.output.csv {
        write_csv_atomic(path, &output.rows)?;
    }
    Ok(())
}
