use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PgnError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("integral does not converge: {0}")]
    NonIntegrable(String),

    #[error("cumulant matching infeasible: {0}")]
    MatchInfeasible(String),

    #[error("root bracketing failed: {0}")]
    RootBracket(String),

    #[error("tau too large: {0}")]
    TauTooLarge(String),

    #[error("matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("centering constant unavailable: {0}")]
    CenteringUnavailable(String),

    #[error("bound hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("insufficient sample: {0}")]
    InsufficientSample(String),

    #[error("empty sample")]
    EmptySample,

    #[error("invalid spec: {0}")]
    Schema(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for PgnError {
    fn from(e: std::io::Error) -> Self {
        PgnError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for PgnError {
    fn from(e: serde_json::Error) -> Self {
        PgnError::Schema(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, PgnError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(PgnError::Domain(msg.into()))
}
