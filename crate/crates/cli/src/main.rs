//! `gwcrp`: fit, select, simulate and evaluate spatially clustered survival
//! models from the command line.
//!
//! Exit status is 0 on success, 2 for bad input or usage, 1 otherwise.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::Parser;
use gwcrp::{Error, Result};

use config::{Cli, Command, RunConfig};

fn run(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::resolve(&cli.command)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Fit(_) => commands::fit(&cfg),
        Command::Select(_) => commands::select(&cfg),
        Command::Simulate(_) => commands::simulate(&cfg),
        Command::Evaluate(_) => commands::evaluate(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}
