use thiserror::Error;

/// Errors raised by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("level {0} outside the supported range 1..=64")]
    LevelOutOfRange(u32),

    #[error("label {label} is not an object at level {level}")]
    InvalidLabel { label: u32, level: u32 },

    #[error("inadmissible channel: {0}")]
    Inadmissible(String),

    #[error("invalid diagram {series}{index}")]
    InvalidDiagram { series: char, index: usize },

    #[error("vertex set is not closed under fusion: {0}")]
    NotClosed(String),

    #[error("graph mismatch: {0}")]
    GraphMismatch(String),

    #[error("malformed connection: {0}")]
    Malformed(String),

    #[error("{what} (residual {residual:.3e})")]
    Numeric { what: String, residual: f64 },

    #[error("singular value {value:.3e} lies inside the gap window ({zero_tol:.0e}, {gap_tol:.0e})")]
    GapViolation { value: f64, zero_tol: f64, gap_tol: f64 },

    #[error("specification error: {0}")]
    Spec(String),

    #[error("resource bound exceeded: {0}")]
    Resource(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn numeric(what: impl Into<String>, residual: f64) -> Self {
        Error::Numeric { what: what.into(), residual }
    }
}
