//! `ei-probe`: sweeps, training runs, measurements, causal-plane series,
//! convergence traces and reports, written to the files named by `--out`.
//!
//! Exit status is 0 on success, 1 for usage errors and 2 when reading data
//! or computing fails. Progress goes to standard error.

mod commands;

use std::process::ExitCode;

use clap::Parser;

use commands::{Cli, CliError};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let workers = ei_probe::parallel::workers_from_env();
    match ei_probe::parallel::with_workers(workers, || commands::run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `ei-probe help` for usage");
            ExitCode::from(1)
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
