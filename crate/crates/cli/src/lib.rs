//! Experiment runner behind the `geohmc` binary.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("config error: {0}")]
    Invalid(String),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    /// Errors raised while assembling the sampler from a config.
    pub fn from_build(e: geohmc::Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Invalid(e.to_string())
        }
    }

    /// Errors raised while a run is in progress.
    pub fn from_run(e: geohmc::Error) -> Self {
        CliError::Numeric(e.to_string())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::Invalid(_) | CliError::Io(_) => 1,
            CliError::Numeric(_) | CliError::ChecksFailed(_) => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
