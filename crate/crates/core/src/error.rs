use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node {node} out of range for graph on {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("self loop ({0}, {0}) cannot be stored as a graph edge")]
    SelfLoop(usize),

    #[error("query requires two distinct nodes, got {0} twice")]
    SameNode(usize),

    #[error("graph contains a directed cycle")]
    NotDag,

    #[error("VAR model is not stable (companion spectral radius {spectral_radius})")]
    Unstable { spectral_radius: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient samples: need more than {needed}, have {available}")]
    InsufficientSamples { needed: usize, available: usize },

    #[error("degenerate {what} at order {order}")]
    Degenerate { what: &'static str, order: usize },

    #[error("pairwise relations are inconsistent with a DAG: peeling stalled with {remaining} nodes left")]
    NonDagPairwise { remaining: usize },

    #[error("input contains non-finite values")]
    NonFinite,

    #[error("log-relative error undefined: ln tr(noise covariance) = {0}")]
    LreDegenerate(f64),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
