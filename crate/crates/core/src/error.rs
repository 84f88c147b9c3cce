//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by estimation, solving, simulation and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// An input value or combination of values is outside the operation's domain.
    #[error("input domain: {0}")]
    InputDomain(String),

    /// A channel index does not address any channel of the signal.
    #[error("channel index {index} out of range for {channels} channels")]
    ChannelIndex { index: usize, channels: usize },

    /// Not enough samples to carry out the requested estimation or training.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Fewer autocovariance lags are available than the requested order needs.
    #[error("insufficient lags: order {requested} needs {requested} lags, only {available} available")]
    InsufficientLags { requested: usize, available: usize },

    /// The trace contains no usable frames for the requested operation.
    #[error("degenerate trace: {0}")]
    DegenerateTrace(String),

    /// A trace, label or model file violated its schema; `row` is 1-based
    /// (the header is row 1).
    #[error("ingestion error at row {row}: {message}")]
    Ingestion { row: u64, message: String },

    /// Model and trace disagree on channel count or sample interval.
    #[error("incompatible inputs: {0}")]
    Incompatible(String),

    /// A scenario or injection specification is self-contradictory.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// Bad configuration (flag combinations, ranges, parse failures).
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
