use std::fmt;

use hdf_core::harness::HarnessError;

/// Failure classes with stable process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config file or missing input paths (exit 2).
    Config(String),
    /// Input data could not be read or processed (exit 3).
    Data(anyhow::Error),
    /// Anything else (exit 4).
    Internal(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn data(err: impl Into<anyhow::Error>) -> Self {
        CliError::Data(err.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(e) => write!(f, "data error: {e:#}"),
            CliError::Internal(e) => write!(f, "internal error: {e:#}"),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::MissingRoot(_) | HarnessError::Protocol(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.into()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
