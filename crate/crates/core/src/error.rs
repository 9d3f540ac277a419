use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UmtsError {
    #[error("invalid metric: {0}")]
    InvalidMetric(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("invalid UMTS: {0}")]
    InvalidUmts(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("unknown state label `{0}`")]
    UnknownLabel(String),
    #[error("algorithm precondition failed: {0}")]
    Precondition(String),
    #[error("constraint violation: beta = {beta} exceeds 1")]
    BetaTooLarge { beta: f64 },
    #[error("potential iteration did not converge after {sweeps} sweeps (last change {last_change:e}, max value {max_value:e})")]
    NonConvergence {
        sweeps: usize,
        last_change: f64,
        max_value: f64,
    },
    #[error("potential not available for {0}")]
    NoPotential(String),
    #[error("invalid HST: {0}")]
    InvalidHst(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, UmtsError>;

impl From<serde_json::Error> for UmtsError {
    fn from(e: serde_json::Error) -> Self {
        UmtsError::Parse(e.to_string())
    }
}
