use thiserror::Error;

/// Errors raised by the inference, scenario and metric routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid label: {0}")]
    Label(String),

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("state space too large for enumeration: {size} joint assignments (limit {limit})")]
    Capacity { size: u128, limit: u128 },

    #[error("degenerate association evidence for target {target}: all weights are zero")]
    DegenerateEvidence { target: usize },

    #[error("numerical failure at time {time_index}: {reason}")]
    NumericalFailure { time_index: usize, reason: String },

    #[error("invalid input: {0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, Error>;
