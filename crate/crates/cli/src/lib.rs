//! Command-line front end of the avoidance random-walk laboratory.

pub mod commands;
pub mod config;
pub mod oracles;
pub mod report;
pub mod verify;

use std::time::Instant;

use thiserror::Error;

use config::{parse_config, UsageError};
use report::{emit, render, Report};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Usage(#[from] UsageError),

    #[error(transparent)]
    Run(#[from] avoidance_core::Error),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Exit code for usage errors.
pub const EXIT_USAGE: i32 = 2;
/// Exit code for a failed check or a failed run.
pub const EXIT_FAILURE: i32 = 1;

/// Runs the command line `argv` (program name first) and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let config = match parse_config(argv) {
        Ok(c) => c,
        Err(UsageError::Clap(e)) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let started = Instant::now();
    let outcome = match commands::execute(&config) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    };
    let report = Report::new(&config, outcome.result, started.elapsed().as_secs_f64());
    let text = render(&report, config.format, outcome.table.as_ref());
    if let Err(e) = emit(&text, config.output.as_deref()) {
        eprintln!("error: {e}");
        return EXIT_FAILURE;
    }
    match outcome.passed {
        Some(false) => EXIT_FAILURE,
        _ => 0,
    }
}
