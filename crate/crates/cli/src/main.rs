//! `fsp`: config-driven experiment runner for the degenerate-diffusion
//! laboratory. Exit codes: 0 checks pass, 1 checks computed but failed,
//! 2 usage or config error, 3 numerical failure.

mod config;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::CliError;

#[derive(Parser)]
#[command(name = "fsp", version, about = "Degenerate-diffusion experiment runner")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Experiment description (sectioned TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding output.directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted-key override such as solver.epsilon=1e-4 (repeatable)
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check profile admissibility and the transform identity
    Verify(Common),
    /// Integrate the configured problem and store the trajectory
    Solve(Common),
    /// Measure the support front and the shrinking-ball energy ladder
    Localize(Common),
    /// Audit the energy inequalities on the configured run
    Estimate(Common),
    /// Run the epsilon list concurrently and aggregate localization data
    Sweep(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, run): (&Common, fn(&config::Experiment) -> Result<runner::Outcome, CliError>) =
        match &cli.cmd {
            Cmd::Verify(c) => (c, runner::cmd_verify),
            Cmd::Solve(c) => (c, runner::cmd_solve),
            Cmd::Localize(c) => (c, runner::cmd_localize),
            Cmd::Estimate(c) => (c, runner::cmd_estimate),
            Cmd::Sweep(c) => (c, runner::cmd_sweep),
        };

    let experiment = match config::load(&common.config, &common.overrides, common.out.as_deref()) {
        Ok(exp) => exp,
        Err(err) => {
            eprintln!("{err}");
            return ExitCode::from(2);
        }
    };
    match run(&experiment) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            ExitCode::from(if outcome.passed { 0 } else { 1 })
        }
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(match err {
                CliError::Config(_) => 2,
                CliError::Numerical(_) => 3,
            })
        }
    }
}
