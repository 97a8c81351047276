//! Shared error type for all engine modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Inputs outside an operation's domain (bad chart coordinates, t <= 0, ...).
    #[error("domain: {0}")]
    Domain(String),

    /// A caller-side contract was violated (non-unitary frame, rank mismatch, ...).
    #[error("contract: {0}")]
    Contract(String),

    /// A series truncation or quadrature could not reach the requested tolerance.
    #[error("precision: {0}")]
    Precision(String),

    /// The model admits no positive Green function.
    #[error("no positive green function: {0}")]
    Parabolic(String),

    /// Pathwise integration failed; carries the offending node index.
    #[error("integration failed at node {node}: {msg}")]
    Integration { node: usize, msg: String },

    /// An exponential-moment accumulator overflowed; carries the path index.
    #[error("overflow in path {path_index}: {msg}")]
    Overflow { path_index: u64, msg: String },

    /// A least-squares fit had no usable data.
    #[error("fit: {0}")]
    Fit(String),

    /// A verdict could not be reached; the safe outcome.
    #[error("undecided: {0}")]
    Undecided(String),
}

pub type Result<T> = std::result::Result<T, Error>;
