//! Errors of the experiment runner with stable codes and exit statuses.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unknown key, missing key or violated validation rule at `path`.
    #[error("E_CONFIG at '{path}': {message}")]
    Config { path: String, message: String },

    /// Value of the wrong type at `path`.
    #[error("E_SCHEMA at '{path}': {message}")]
    Schema { path: String, message: String },

    #[error("E_GRIDMISMATCH: {0}")]
    GridMismatch(String),

    /// Another run holds the output directory.
    #[error("E_LOCKED: {0}")]
    Locked(String),

    #[error("{code}: {0}", code = .0.code())]
    Core(#[from] pidex_core::Error),

    #[error("E_IO: {0}")]
    Io(#[from] std::io::Error),

    #[error("E_IO: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn config(path: &str, message: impl Into<String>) -> Self {
        CliError::Config { path: path.to_string(), message: message.into() }
    }

    pub fn schema(path: &str, message: impl Into<String>) -> Self {
        CliError::Schema { path: path.to_string(), message: message.into() }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "E_CONFIG",
            CliError::Schema { .. } => "E_SCHEMA",
            CliError::GridMismatch(_) => "E_GRIDMISMATCH",
            CliError::Locked(_) => "E_LOCKED",
            CliError::Core(e) => e.code(),
            CliError::Io(_) | CliError::Csv(_) => "E_IO",
        }
    }
}

/// Process exit statuses.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const ERROR: i32 = 1;
    pub const CRITERION_FAILED: i32 = 2;
}
