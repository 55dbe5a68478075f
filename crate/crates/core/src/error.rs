use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("normalized radius {0} outside [0.20, 1.00]")]
    RadiusOutOfRange(f64),

    #[error("invalid propeller: {0}")]
    InvalidSpec(String),

    #[error("invalid design brief: {0}")]
    InvalidBrief(String),

    #[error("efficiency undefined for K_Q = {0}")]
    UndefinedEfficiency(f64),

    #[error("solver produced a non-finite value at J = {j}")]
    NonFinite { j: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("sampling rejected {rejected} of {attempted} draws")]
    RejectionRate { rejected: usize, attempted: usize },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("model file: {0}")]
    Model(String),

    #[error("zero target value in {0}")]
    ZeroTarget(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
