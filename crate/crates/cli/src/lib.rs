//! Configuration, CSV I/O and experiment drivers behind the `qdfeedback`
//! binary.

pub mod config;
pub mod csvio;
pub mod experiments;
pub mod output;

use thiserror::Error;

pub use config::{load_config, parse_config, Config};
pub use csvio::{read_spectrum_csv, SpectrumFile};
pub use experiments::{run_experiment, Experiment, RunOutput};
pub use output::write_outputs;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("bad input data: {0}")]
    Input(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// Process exit status: 2 for configuration or input problems, 3 for
    /// numeric failures, 1 for file-system errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 1,
        }
    }

    pub(crate) fn numeric(e: impl std::fmt::Display) -> Self {
        CliError::Numeric(e.to_string())
    }
}
