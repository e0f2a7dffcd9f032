use std::path::Path;

use boustro_core::scenario::ScenarioError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad file, bad field, mismatched plan. Exit 2.
    #[error("{0}")]
    Input(String),
    /// No trackline touches any spill. Exit 3.
    #[error("infeasible scenario: {0}")]
    Infeasible(String),
    /// The optimizer produced nothing usable. Exit 4.
    #[error("solver failure: {0}")]
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Solver(_) => 4,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Input(format!("{}: {err}", path.display()))
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Input(format!("csv export: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
