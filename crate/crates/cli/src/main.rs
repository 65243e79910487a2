use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod config;
mod error;
mod output;
mod report;
mod stages;

use error::CliError;
use output::OutputDir;
use stages::{Outcome, Runner};

/// Stationary bumps of the Amari neural field: existence, instability and
/// escape dynamics, written as plot-ready files.
#[derive(Debug, Parser)]
#[command(name = "neurofield", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (overrides `output.directory`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Total subintervals on [-d, d] (overrides the grid section).
    #[arg(long, global = true, value_name = "INT")]
    grid_n: Option<usize>,

    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Check the kernel and firing-rate hypotheses; writes report.json.
    Check,
    /// Sub- and supersolution profiles; writes profiles.csv and constants.json.
    Bounds,
    /// Third fixed point and its extension; writes u_star.csv, u_tilde.csv, fixedpoint.json.
    Solve,
    /// Linearization spectrum and instability certificate (needs `solve`).
    Spectrum,
    /// Escape from the bump along the unstable direction (needs `spectrum`).
    Simulate,
    /// Every stage, reusing matching caches; writes run_report.json.
    Certify,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("NEUROFIELD_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("NEUROFIELD_THREADS = '{raw}' is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    configure_threads()?;
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config PATH is required".into()))?;
    let loaded = config::load(path, cli.grid_n)?;
    let dir = cli.out.clone().unwrap_or_else(|| loaded.config.output.directory.clone());
    let out = OutputDir::create(&dir, loaded.config.output.precision)?;
    let runner = Runner::new(loaded, out, cli.quiet);
    match cli.command {
        Command::Check => runner.check(),
        Command::Bounds => runner.bounds(),
        Command::Solve => runner.solve(),
        Command::Spectrum => runner.spectrum(),
        Command::Simulate => runner.simulate(),
        Command::Certify => runner.certify(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(o) => {
            if !cli.quiet {
                println!("{}: {}", if o.pass { "pass" } else { "fail" }, o.summary);
            }
            ExitCode::from(if o.pass { 0 } else { 2 })
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
