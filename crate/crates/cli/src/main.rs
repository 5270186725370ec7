//! `musanet` command-line driver.

mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, FromArgMatches};

use args::{Cli, Command};

/// Error classes mapped to exit codes 1, 2 and 3.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl From<musanet::Error> for Failure {
    fn from(e: musanet::Error) -> Self {
        match e {
            musanet::Error::Config(_) => Failure::Usage(e.to_string()),
            musanet::Error::Numeric(_) => Failure::Numeric(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numeric(m) => m,
        }
    }
}

fn run(cli: Cli, patients_given: bool) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("--threads: {e}")))?;
    }
    let dump = cli.dump_config;
    match &cli.command {
        Command::GenData(a) => commands::gen_data(a, patients_given, dump),
        Command::Train(a) => commands::train_command(a, dump),
        Command::Evaluate(a) => commands::evaluate_command(a, dump),
        Command::Robustness(a) => commands::robustness_command(a, dump),
        Command::Gradcheck(a) => commands::gradcheck_command(a, dump),
        Command::Explain(a) => commands::explain_command(a, dump),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let patients_given = matches
        .subcommand_matches("gen-data")
        .is_some_and(|m| m.value_source("patients") == Some(clap::parser::ValueSource::CommandLine));
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli, patients_given) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
