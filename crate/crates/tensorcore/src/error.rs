use thiserror::Error;

/// Errors raised by tensor construction, operators and the optimizer.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: axis {axis} expects size {expected}, got {got}")]
    AxisMismatch {
        op: &'static str,
        axis: usize,
        expected: usize,
        got: usize,
    },

    #[error("{op}: incompatible shapes: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("{op}: expects a scalar, got shape {shape:?}")]
    NotScalar { op: &'static str, shape: Vec<usize> },

    #[error("{op}: non-finite value in input")]
    NonFinite { op: &'static str },

    #[error("parameter {index} has no gradient (run backward first)")]
    MissingGrad { index: usize },

    #[error("optimizer state was created for different parameters (slot {index})")]
    StateMismatch { index: usize },

    #[error("data length {got} does not match shape {shape:?} (needs {expected})")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },

    #[error("checkpoint segment: {0}")]
    Segment(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;
