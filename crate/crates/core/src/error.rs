use thiserror::Error;

use crate::estimator::TracePoint;

#[derive(Debug, Error)]
pub enum AmvError {
    #[error("dimension mismatch: expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("evaluation error at node {node:?}: {detail}")]
    Evaluation { node: Vec<f64>, detail: String },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("singular system: {detail} (condition estimate {condition:.3e})")]
    Singular { detail: String, condition: f64 },

    #[error("parse error at offset {offset}: {detail}")]
    Parse { offset: usize, detail: String },

    #[error("radius r = {r} failed after {} completed radii: {source}", partial.len())]
    Trace {
        r: f64,
        partial: Vec<TracePoint>,
        #[source]
        source: Box<AmvError>,
    },
}

pub type Result<T> = std::result::Result<T, AmvError>;
