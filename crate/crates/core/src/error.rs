use std::path::PathBuf;

/// Errors produced by network construction, learning rules and data loading.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("shape mismatch at layer {layer}: expected {expected}, got {got}")]
    Shape {
        layer: usize,
        expected: String,
        got: String,
    },

    #[error("layer index {index} out of range 1..={depth}")]
    LayerIndex { index: usize, depth: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot shape spectrum: {0}")]
    Spectrum(String),

    #[error("degenerate activity at layer {layer}: pre/post overlap {value:e} is below floor {floor:e}")]
    DegenerateActivity { layer: usize, value: f64, floor: f64 },

    #[error("non-finite values in {0}")]
    NonFinite(String),

    #[error("equilibrium state does not belong to this stack and batch")]
    StaleEquilibrium,

    #[error("inference diverged at step {step}: energy rose for {window} consecutive steps")]
    InferenceDiverged { step: usize, window: usize },

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("{path}: bad IDX data at byte {offset}: {reason}")]
    Format {
        path: PathBuf,
        offset: u64,
        reason: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;
