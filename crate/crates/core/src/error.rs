use thiserror::Error;

/// Failure modes shared by every module.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("x = {x} lies outside [0, {y_max}]")]
    OutOfRange { x: f64, y_max: f64 },

    #[error("t = {0} is not below the blow-up time 1")]
    Domain(f64),

    #[error("kernel chain is singular at t = 1")]
    Singular,

    #[error("input is outside the range space: functional {value:.3e} exceeds {bound:.3e}")]
    NotInRange { value: f64, bound: f64 },

    #[error("degenerate base point: functional denominator {0:.3e}")]
    DegenerateBase(f64),

    #[error("chord iteration stalled after {} iterations, last residual {:.3e}", history.len(), history.last().copied().unwrap_or(f64::NAN))]
    NoConvergence { history: Vec<f64> },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("degenerate ratio: {0}")]
    Degenerate(String),

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
