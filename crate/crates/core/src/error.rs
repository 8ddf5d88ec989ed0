use thiserror::Error;

use crate::grid::NodeKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("tree is not graded at {0}: {1}")]
    NotGraded(NodeKey, String),

    #[error("elliptic solve did not converge after {iterations} iterations (relative residual {final_residual:.3e})")]
    NoConvergence {
        iterations: usize,
        final_residual: f64,
        residual_history: Vec<f64>,
    },

    #[error("resolution mismatch: {0}")]
    Resolution(String),

    #[error("non-finite value in field {field} at t = {time}")]
    NonFinite { field: &'static str, time: f64 },

    #[error("internal scheduling error: {0}")]
    Scheduling(String),
}

impl Error {
    /// Errors caused by user input rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}
