//! Command-line front end: argument parsing, worker pool, report writing
//! and the exit-code contract (0 ok, 1 usage, 2 data, 3 numeric).

pub mod args;
pub mod commands;
pub mod error;
pub mod util;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

pub use args::{Cli, Command};
pub use error::{CliError, CliResult, EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE};

/// Verbosity filter, in `env_logger` syntax (default `warn`).
pub const LOG_ENV: &str = "ITSMLAB_LOG";

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Evaluate(a) => commands::evaluate::run(a).map(drop),
        Command::Train(a) => commands::train::run(a).map(drop),
        Command::Diagnose(a) => commands::diagnose::run(a).map(drop),
        Command::Render(a) => commands::render::run(a).map(drop),
        Command::Synth(a) => commands::synth::run(a).map(drop),
    }
}

pub fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Parses `args`, runs the command and returns the process exit code.
/// Failures are reported on stderr as a single `error kind=...` line.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return EXIT_OK;
        }
        Err(e) => {
            let text = e.render().to_string();
            let first = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments");
            let msg = first.trim_start_matches("error: ").to_string();
            eprintln!("{}", CliError::Usage(msg).line());
            return EXIT_USAGE;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", e.line());
            e.exit_code()
        }
    }
}
