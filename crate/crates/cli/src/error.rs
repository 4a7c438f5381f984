use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed or invalid experiment configuration.
    #[error("config: {0}")]
    Config(String),
    /// Input files that are missing, unreadable or inconsistent.
    #[error("input: {0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("numerical failure: {0}")]
    Numerical(setbp::Error),
    /// An oracle self-check did not meet its bound.
    #[error("check failed: {0}")]
    Check(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for usage, config and input problems, 3 for
    /// numerical failures, 1 for failed self-checks.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) | CliError::Io { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Check(_) => 1,
        }
    }
}

impl From<setbp::Error> for CliError {
    fn from(e: setbp::Error) -> Self {
        use setbp::Error as E;
        match e {
            E::NumericalFailure { .. } | E::Singular(_) | E::DegenerateEvidence { .. } => CliError::Numerical(e),
            other => CliError::Input(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
