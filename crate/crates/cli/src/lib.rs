//! Command-line front end: reads a run config, runs one of the
//! subcommands and writes JSON reports and CSV traces.

pub mod commands;
pub mod config;
pub mod ingest;
pub mod output;

pub use commands::{compare, replay_cmd, simulate, solve, validate_params, Inputs};
pub use config::RunConfig;

/// A failed run, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad config, parameters, data or schedule.
    #[error("{0:#}")]
    Input(anyhow::Error),
    /// The solver could not produce a certified schedule.
    #[error("{0:#}")]
    Solver(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Solver(_) => 2,
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Input(e)
    }
}
