use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("mask selects no voxels")]
    EmptyMask,

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-null density is zero at x[{index}] = {x}")]
    DegenerateDensity { index: usize, x: f64 },

    #[error("zero variance in {channel} channel")]
    ZeroVariance { channel: String },

    #[error("all non-null weights are zero")]
    ZeroWeights,

    #[error("bandwidth collapsed to zero (constant statistics)")]
    ZeroBandwidth,

    #[error("exact enumeration refused for m = {m} (limit {limit})")]
    TooLarge { m: usize, limit: usize },

    #[error("non-finite loss at optimizer step {step}")]
    NonFiniteLoss { step: usize },

    #[error("signal proportion {target} unreachable after {attempts} blob attempts (reached {reached:.4})")]
    UnreachableProportion {
        target: f64,
        reached: f64,
        attempts: usize,
    },

    #[error("EM iteration {iteration}: {source}")]
    Em {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("replication {index}: {source}")]
    Replication {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("payload length mismatch in {path}: expected {expected} bytes, found {actual}")]
    LengthMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("malformed header {path}: {reason}")]
    Header { path: PathBuf, reason: String },

    #[error("unsupported checkpoint version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn at_em_iteration(self, iteration: usize) -> Self {
        Error::Em {
            iteration,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
