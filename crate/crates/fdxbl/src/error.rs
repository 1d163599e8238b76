use thiserror::Error;

/// Errors produced by the simulation, learner, and harness layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("degenerate channel: {0}")]
    DegenerateChannel(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("degenerate beam: {0}")]
    DegenerateBeam(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checkpoint tensor `{name}`: expected shape {expected:?}, found {found:?}")]
    CheckpointShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("missing checkpoint for T={horizon}, kappa={kappa_db} dB (looked at {path})")]
    MissingCheckpoint {
        horizon: usize,
        kappa_db: f64,
        path: String,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
