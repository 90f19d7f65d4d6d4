use std::io;

use thiserror::Error;

/// Errors raised across the planning toolkit.
#[derive(Error, Debug)]
pub enum PlanError {
    #[error("parse error: {0}")]
    Parse(String),

    /// A scenario value violated one of its invariants. `path` names the field,
    /// e.g. `vehicles[1].mass`.
    #[error("validation error at {path}: {message}")]
    Validation { path: String, message: String },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Two anchor positions coincide so the separation gradient is undefined.
    #[error("degenerate anchor for pair ({i}, {j}) at step {k}: separation {separation:e}")]
    DegenerateAnchor {
        i: usize,
        j: usize,
        k: usize,
        separation: f64,
    },

    #[error("slack columns were already added to this program")]
    SlackAlreadyAdded,

    #[error("slack columns are missing; call add_slack_columns first")]
    SlackMissing,

    #[error("iteration records are not consecutive: {prev} then {curr}")]
    NonConsecutive { prev: usize, curr: usize },

    #[error("size guard: {0}")]
    SizeGuard(String),

    #[error("branch and bound stopped after {nodes} nodes without proving optimality")]
    NodeLimit { nodes: usize },

    #[error("invalid program: {0}")]
    InvalidProgram(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PlanError>;

pub(crate) fn invalid(path: impl Into<String>, message: impl Into<String>) -> PlanError {
    PlanError::Validation {
        path: path.into(),
        message: message.into(),
    }
}
