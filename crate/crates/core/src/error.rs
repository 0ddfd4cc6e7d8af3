//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the simulation, estimation, and harness layers.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation
    /// (e.g. a latent-technology value outside the declared support).
    #[error("domain error: {0}")]
    Domain(String),

    /// A structural precondition is violated (e.g. flexible elasticities
    /// summing to one or more, which admits no finite input choice).
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Too few observations for the requested fit.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Malformed or non-finite data values.
    #[error("data error: {0}")]
    Data(String),

    /// Dataset columns do not match the model variant's schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// Bad configuration key or value.
    #[error("config error: {0}")]
    Config(String),

    /// An iterative numerical routine failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for CLI use: 1 usage/config, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Invalid(_) => 1,
            Error::Domain(_)
            | Error::InsufficientData(_)
            | Error::Data(_)
            | Error::Schema(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => 2,
            Error::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
