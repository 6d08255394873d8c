use thiserror::Error;

/// Errors raised by the simulation, reconstruction and analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TsrError {
    #[error("no components")]
    NoComponents,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("signal does not cover {0}")]
    SpanNotCovered(String),

    #[error("pattern not full rank")]
    PatternNotFullRank,

    #[error("singular system: {0}")]
    Singular(String),

    #[error("frame {index}: {source}")]
    Frame {
        index: i64,
        #[source]
        source: Box<TsrError>,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("zero-norm input")]
    ZeroNorm,

    #[error("{n}x{m} patterns exceed the exhaustive range (n*m <= {limit}); use sampled mode instead")]
    OutOfExhaustiveRange { n: usize, m: usize, limit: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("calibration: {0}")]
    Calibration(String),
}

pub type Result<T> = std::result::Result<T, TsrError>;

pub(crate) fn invalid(msg: impl Into<String>) -> TsrError {
    TsrError::InvalidParameter(msg.into())
}
