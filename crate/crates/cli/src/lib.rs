//! Scenario configuration, SNR sweeps and CSV output for `cachemod`.

pub mod config;
pub mod output;
pub mod scenario;

use thiserror::Error;

pub use config::{parse_config, ScenarioConfig};
pub use output::{emit_csv, write_csv};
pub use scenario::{run_scenario, ResultRow, ResultSet, RowUser};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{field}: {message}")]
    Config { field: String, message: String },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn config(field: impl Into<String>, message: impl ToString) -> Self {
        CliError::Config {
            field: field.into(),
            message: message.to_string(),
        }
    }

    /// Process exit code: 2 for configuration errors, 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<cachemod::Error> for CliError {
    fn from(e: cachemod::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
