//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any stage of the workbench.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor/image dimensions do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// NaN or infinity where a finite value is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A class has no correctly classified training examples, so no mean
    /// activation vector can be built for it.
    #[error("class {class} has no correctly classified training examples")]
    NoCorrectExamples { class: usize },

    /// A class has too few correct activation vectors for the requested tail.
    #[error("class {class} has {available} correct activation vectors but tail size {tail_size} is required")]
    InsufficientTail {
        class: usize,
        available: usize,
        tail_size: usize,
    },

    /// The Weibull tail has no spread, so the shape MLE has no solution.
    #[error("degenerate Weibull tail: {0}")]
    DegenerateTail(String),

    /// The Weibull shape solver did not converge.
    #[error("Weibull MLE did not converge: {0}")]
    FitDiverged(String),

    /// The attack gradient vanished before the target was reached.
    #[error("gradient stall: the loss is at a stationary point")]
    GradientStall,

    /// A model or mav/openmax file is malformed or the wrong version.
    #[error("model file: {0}")]
    ModelFormat(String),

    /// A dataset file is malformed.
    #[error("dataset: {0}")]
    Dataset(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
