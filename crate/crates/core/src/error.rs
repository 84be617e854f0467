//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter violates a precondition.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A requested supply level is at or above the curve's attainable bound.
    #[error("supply exceeded: requested {requested} with bound {bound}")]
    SupplyExceeded { requested: f64, bound: f64 },

    /// Inputs are structurally inconsistent (missing curves, bad schema, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// The dual solver failed to certify a solution.
    #[error("solver error: {0}")]
    Solver(String),

    /// The instance is infeasible and strict mode was requested.
    #[error("infeasible instance: {0}")]
    Infeasible(String),

    /// An instance is too large for the brute-force oracle.
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),

    /// Malformed input data (log rows, files).
    #[error("input error: {0}")]
    Input(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
