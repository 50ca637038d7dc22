//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by any wellcast operation.
#[derive(Debug, Error)]
pub enum Error {
    /// A frame index in a video directory is absent or non-consecutive.
    #[error("missing frame {index} in {dir}")]
    MissingFrame { dir: PathBuf, index: usize },

    /// Tensor, frame, or video dimensions are incompatible.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// An operation received a frame in the wrong color space.
    #[error("wrong color space: expected {expected}, got {found}")]
    WrongColorSpace { expected: &'static str, found: &'static str },

    /// A frame value is outside [0, 1] or not finite.
    #[error("invalid frame data: {0}")]
    InvalidFrame(String),

    /// A video must contain at least one frame.
    #[error("video has no frames")]
    EmptyVideo,

    /// Triangle thresholding needs at least two populated bins.
    #[error("degenerate histogram: fewer than two non-zero bins")]
    DegenerateHistogram,

    /// Well localization found no pixel above the threshold.
    #[error("no pixel above threshold; well appears empty")]
    EmptyWell,

    /// The requested crop does not fit inside the image.
    #[error("crop of {crop} px does not fit in {height}x{width} image")]
    CropTooLarge { crop: usize, height: usize, width: usize },

    /// Temporal operations need a minimum number of frames.
    #[error("need at least {needed} frames, got {got}")]
    TooFewFrames { needed: usize, got: usize },

    /// A held-out well id does not exist in the record set.
    #[error("unknown well id: {0}")]
    UnknownWell(String),

    /// A numeric op produced a NaN or infinite value.
    #[error("non-finite value in {0}")]
    NumericOverflow(String),

    /// backward() requires a single-element loss tensor.
    #[error("loss must be scalar, got {0} elements")]
    NotScalar(usize),

    /// A dataset split required for training is empty.
    #[error("dataset split is empty: {0}")]
    EmptyDataset(String),

    /// Checkpoint and input disagree on model configuration.
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    /// Checkpoint file is corrupt or truncated.
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),

    /// Simulator configuration violates its invariants.
    #[error("invalid configuration: {0}")]
    ConfigError(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
