//! `netseir`: simulate, observe, fit and check network SEIR epidemics.
//!
//! Exit status: 0 on success, 1 on invalid input or usage, 2 on runtime failure.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "netseir", version, about = "Network SEIR epidemics with a Dirichlet-process degree model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a population, its contact network and an epidemic.
    Simulate(Common),
    /// Apply a sampling design to a simulated truth.
    Observe(Common),
    /// Run the sampler on observed data.
    Fit(Common),
    /// Undo label switching in chain output.
    Relabel(Common),
    /// Posterior-predictive checks.
    #[command(subcommand)]
    Ppc(PpcCommand),
    /// Replicated simulation studies.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Subcommand, Debug)]
enum PpcCommand {
    /// Degree distributions of predictive networks.
    Degrees(Common),
    /// Peak infectious counts of predictive epidemics.
    Epidemic(Common),
}

#[derive(Subcommand, Debug)]
enum ExperimentCommand {
    /// Coverage of 95% credible intervals.
    Coverage(Common),
    /// Estimation error against the contact sample size.
    Mse(Common),
    /// Draws from the Dirichlet-process degree prior.
    DppDemo(Common),
    /// Coverage of posterior-predictive intervals for the epidemic peak.
    PpcCalibration(Common),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Simulate(c) => commands::simulate(c),
        Command::Observe(c) => commands::observe(c),
        Command::Fit(c) => commands::fit(c),
        Command::Relabel(c) => commands::relabel(c),
        Command::Ppc(PpcCommand::Degrees(c)) => commands::ppc_degrees(c),
        Command::Ppc(PpcCommand::Epidemic(c)) => commands::ppc_epidemic(c),
        Command::Experiment(ExperimentCommand::Coverage(c)) => commands::coverage(c),
        Command::Experiment(ExperimentCommand::Mse(c)) => commands::mse(c),
        Command::Experiment(ExperimentCommand::DppDemo(c)) => commands::dpp_demo(c),
        Command::Experiment(ExperimentCommand::PpcCalibration(c)) => commands::ppc_calibration(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
