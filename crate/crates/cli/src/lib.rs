//! Command-line front end: configuration, orchestration and report files.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod sweep;

use args::{Cli, Command};
pub use error::CliError;

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Synthesize(a) => commands::cmd_synthesize(a),
        Command::Evaluate(a) => commands::cmd_evaluate(a),
        Command::Sweep(a) => commands::cmd_sweep(a),
        Command::InspectTree(a) => commands::cmd_inspect_tree(a),
        Command::GenerateMock(a) => commands::cmd_generate_mock(a),
    }
}
