use thiserror::Error;

use crate::scenario::VertexId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The scenario document is not well-formed JSON or does not match the schema.
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),

    /// The document parsed but violates a model invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A parameter is outside its admissible range.
    #[error("configuration error: {0}")]
    Config(String),

    /// No exit can be reached from the vertex; the graph is corrupt.
    #[error("vertex {0} cannot reach any exit")]
    Unreachable(VertexId),

    /// The random neural network fixed point did not converge.
    #[error("RNN fixed point did not converge after {sweeps} sweeps (weights {weights:?})")]
    RnnDiverged { sweeps: usize, weights: Vec<(f64, f64)> },

    /// A route handed to a time estimate does not satisfy its contract.
    #[error("invalid route: {0}")]
    Route(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
