use std::io;

/// Errors raised by the engine, the model builders and the trainer.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    /// Two tensors (or a tensor and a layer) disagree on shape.
    #[error("{layer}: shape mismatch, expected {expected} but got {actual}")]
    Shape {
        layer: String,
        expected: String,
        actual: String,
    },

    /// The spatial size collapsed below what a layer needs.
    #[error("shape planning failed at {layer}: {reason}")]
    Plan { layer: String, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Labels, splits or manifests that cannot be trained or evaluated on.
    #[error("invalid data: {0}")]
    Data(String),

    /// NaN or infinity showed up in a loss or gradient.
    #[error("numerical failure: {0}")]
    NonFinite(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err<E: std::fmt::Debug, A: std::fmt::Debug>(
    layer: &str,
    expected: E,
    actual: A,
) -> Error {
    Error::Shape {
        layer: layer.to_string(),
        expected: format!("{expected:?}"),
        actual: format!("{actual:?}"),
    }
}
