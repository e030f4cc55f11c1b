use thiserror::Error;

/// Errors raised anywhere in the simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Parameter combination that cannot be simulated.
    #[error("configuration error: {0}")]
    Config(String),
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Mismatched array shapes or indices.
    #[error("structural error: {0}")]
    Structural(String),
    /// A matrix expected to be positive definite was not.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Clustering constraints that admit no assignment.
    #[error("infeasible configuration: {0}")]
    Infeasible(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
