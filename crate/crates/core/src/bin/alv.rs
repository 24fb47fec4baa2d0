//! `alv` — run verification suites over a scenario file.
//!
//! Exit status: 0 = all suites passed, 1 = at least one suite failed,
//! 2 = configuration/usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use alv_core::scenario::ScenarioFile;
use alv_core::suites;

#[derive(Parser)]
#[command(name = "alv", version, about = "Lie-algebroid calculus verification engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a scenario and run its verification suites.
    Check(CheckArgs),
}

#[derive(clap::Args)]
struct CheckArgs {
    /// Path to the scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,

    /// Override the sampling seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the sample count.
    #[arg(long)]
    samples: Option<usize>,

    /// Multiply every suite tolerance by this factor.
    #[arg(long, default_value_t = 1.0)]
    tol_scale: f64,

    /// Restrict the run to the named suites (repeatable; default: all
    /// suites listed in the scenario).
    #[arg(long = "suite")]
    suites: Vec<String>,

    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

fn run_check(args: &CheckArgs) -> Result<bool, alv_core::Error> {
    let file = ScenarioFile::load(&args.scenario)?;
    let mut sc = file.resolve()?;
    if let Some(seed) = args.seed {
        sc.sampling.seed = seed;
    }
    if let Some(samples) = args.samples {
        if samples == 0 {
            return Err(alv_core::Error::config("--samples must be ≥ 1"));
        }
        sc.sampling.count = samples;
    }
    if !(args.tol_scale > 0.0) {
        return Err(alv_core::Error::config("--tol-scale must be positive"));
    }
    if !args.suites.is_empty() {
        for want in &args.suites {
            if !sc.suites.iter().any(|(n, _)| n == want) {
                return Err(alv_core::Error::config(format!(
                    "--suite '{want}' is not listed in the scenario"
                )));
            }
        }
        sc.suites.retain(|(n, _)| args.suites.contains(n));
    }
    let report = suites::run_all(&sc, args.tol_scale)?;
    match args.format {
        Format::Json => println!("{}", report.to_json()),
        Format::Text => print!("{}", report.to_text()),
    }
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Check(args) => match run_check(&args) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::from(1),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
    }
}
