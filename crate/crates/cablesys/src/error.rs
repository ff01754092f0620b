//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A construction would exceed the configured node/vertex budget.
    #[error("capacity exceeded: requested {requested} {what}, budget {budget}")]
    Capacity {
        what: &'static str,
        requested: u64,
        budget: u64,
    },

    /// An iterative solver failed to reach its tolerance.
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// A Dirichlet domain has nodes unreachable from its boundary.
    #[error("domain is disconnected from its boundary ({unreachable} unreachable nodes)")]
    DisconnectedDomain { unreachable: usize },

    /// Invalid argument outside a function's domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
