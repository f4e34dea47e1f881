//! `jetflow`: run scenario files through the jet geometry library.

mod commands;
mod error;
mod report;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use jetflow::lagrange::Bracket;

use commands::Mode;
use error::CliError;
use scenario::Scenario;

#[derive(Debug, Parser)]
#[command(
    name = "jetflow",
    version,
    about = "Harmonic curves and covariance checks on 1-jet spaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate every initial condition and write trajectory CSV.
    Integrate(Args),
    /// Run the covariance suite and print a JSON-lines report.
    Check(Args),
    /// Compare Euler–Lagrange residuals of both spatial brackets.
    ElCompare(Args),
    /// Print the nonlinear connection at each initial point.
    Connection(Args),
}

#[derive(Debug, clap::Args)]
struct Args {
    /// Scenario file (TOML).
    scenario: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Harmonic)]
    mode: Mode,
    /// Use the alternative ∂L/∂x bracket term instead of the corrected ∂L/∂y.
    #[arg(long)]
    paper_exact_bracket: bool,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Args {
    fn bracket(&self) -> Bracket {
        if self.paper_exact_bracket {
            Bracket::Printed
        } else {
            Bracket::Corrected
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (Command::Integrate(args) | Command::Check(args) | Command::ElCompare(args) | Command::Connection(args)) =
        &cli.command;
    let sc = Scenario::load(&args.scenario.to_string_lossy())?;
    let seed = args.seed.unwrap_or(sc.seed);
    let out = args.out.as_deref();
    match &cli.command {
        Command::Integrate(_) => commands::integrate(&sc, args.mode, args.bracket(), out),
        Command::Check(_) => commands::emit_report(&commands::check(&sc, seed)?, out),
        Command::ElCompare(_) => commands::emit_report(&commands::el_compare(&sc, seed, args.bracket())?, out),
        Command::Connection(_) => commands::connection_report(&sc, args.bracket(), out),
    }
}

fn main() -> ExitCode {
    let filter = EnvFilter::try_from_env("JETFLOW_LOG").unwrap_or_else(|_| EnvFilter::new("warn"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("jetflow: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
