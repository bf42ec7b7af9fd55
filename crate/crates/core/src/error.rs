use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty point cloud")]
    EmptyPointCloud,

    #[error("nearest-neighbor distance undefined: need at least 2 distinct points, got {0}")]
    TooFewPoints(usize),

    #[error("zero-length segment")]
    ZeroLengthSegment,

    #[error("mesh has zero total area")]
    ZeroArea,

    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),

    #[error("face {face} references vertex {index} but mesh has {count} vertices")]
    FaceIndexOutOfRange {
        face: usize,
        index: usize,
        count: usize,
    },

    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),

    #[error("empty needle set: {0}")]
    EmptyNeedleSet(&'static str),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error(
        "non-finite loss at iteration {iteration} (l_opp = {l_opp}, l_same = {l_same})"
    )]
    NonFiniteLoss {
        iteration: usize,
        l_opp: f64,
        l_same: f64,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}
