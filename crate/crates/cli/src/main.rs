//! `mfg`: batch front-end for the mean field game solver and certifier.
//!
//! Exit codes: 0 success (or verified), 1 verification failed, 2 usage or
//! configuration error, 3 solver failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Failure;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "mfg", version, about = "Primal-dual solver and certifier for finite-horizon mean field games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Overrides `output_dir` from the configuration.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Multi-start equilibrium search; writes candidates.json and one CSV directory per candidate.
    Solve(Common),
    /// Checks flow, occupation, terminal and psi CSVs; exits 0 iff certified.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Directory with the CSVs (default: `verify.input_dir`, else `<output_dir>/candidate_0`).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// One occupation LP and its certificate against a given flow.
    BestResponse {
        #[command(flatten)]
        common: Common,
        /// Flow CSV (default: `best_response.flow`, else the initial law held constant).
        #[arg(long)]
        flow: Option<PathBuf>,
    },
    /// Runs the primal-dual iteration and the HJB-FP iteration and compares them.
    CompareHjbfp(Common),
    /// Monte-Carlo check that a policy reproduces its flow.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Candidate directory to simulate (default: solve first and take the lowest value).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Lists the builtin models and their parameters.
    ListModels {
        #[arg(long)]
        json: bool,
    },
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf), Failure> {
    let config = RunConfig::load(&common.config).map_err(Failure::Usage)?;
    let output = common.output.clone().unwrap_or_else(|| config.output_dir.clone());
    Ok((config, output))
}

fn run(cli: Cli) -> Result<String, Failure> {
    match cli.command {
        Command::Solve(common) => {
            let (config, output) = load(&common)?;
            commands::solve(&config, &output)
        }
        Command::Verify { common, input } => {
            let (config, output) = load(&common)?;
            let input = input.unwrap_or_else(|| commands::default_candidate_dir(&config));
            commands::verify(&config, &input, &output)
        }
        Command::BestResponse { common, flow } => {
            let (config, output) = load(&common)?;
            commands::best_response(&config, flow.as_deref(), &output)
        }
        Command::CompareHjbfp(common) => {
            let (config, output) = load(&common)?;
            commands::compare_hjbfp(&config, &output)
        }
        Command::Simulate { common, input } => {
            let (config, output) = load(&common)?;
            commands::simulate(&config, input.as_deref(), &output)
        }
        Command::ListModels { json } => commands::list_models(json),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(message) => {
            println!("{message}");
            ExitCode::SUCCESS
        }
        Err(failure) => {
            let code = failure.exit_code();
            match failure {
                Failure::Unverified(line) => println!("{line}"),
                Failure::Usage(e) => eprintln!("error: {e:#}"),
                Failure::Solver(e) => eprintln!("solver failure: {e:#}"),
            }
            ExitCode::from(code as u8)
        }
    }
}
