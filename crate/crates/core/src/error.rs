use thiserror::Error;

/// Errors produced by the mechanisms and the simulation harness.
#[derive(Debug, Clone, PartialEq, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("element {element} is outside the universe of size {universe}")]
    OutOfRange { element: u64, universe: u64 },

    #[error("histogram is empty")]
    EmptyHistogram,

    #[error("no client responses to aggregate")]
    EmptyResponses,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// Every trial or repeat came back empty; distinct from a wrong answer.
    #[error("mechanism produced no candidate")]
    NoCandidate,

    #[error("mechanism `{0}` does not provide frequency estimates")]
    NoFrequencyEstimate(&'static str),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
