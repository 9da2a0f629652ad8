use thiserror::Error;

/// Broad classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Filesystem problems.
    Io,
    /// Input files or values that violate the model's data contract.
    Data,
    /// Solver or likelihood failures (non-convergence, impossible data).
    Numerical,
}

#[derive(Debug, Error)]
pub enum CarpError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("risk catalog is empty")]
    EmptyCatalog,

    #[error("duplicate risk id `{0}`")]
    DuplicateRisk(String),

    #[error("unknown risk id `{0}`")]
    UnknownRisk(String),

    #[error("unknown risk category `{0}`")]
    UnknownCategory(String),

    #[error("invalid likelihood for risk `{id}`: {reason}")]
    InvalidLikelihood { id: String, reason: String },

    #[error("invalid pair record: {0}")]
    InvalidPair(String),

    #[error("invalid month label `{0}` (expected YYYY-MM)")]
    InvalidMonth(String),

    #[error("gap in month sequence between {before} and {after}")]
    MonthGap { before: String, after: String },

    #[error("non-binary state value `{value}` for risk `{risk}` in {month}")]
    NonBinaryState {
        risk: String,
        month: String,
        value: String,
    },

    #[error("missing history cell for risk `{risk}` in {month}")]
    MissingCell { risk: String, month: String },

    #[error("duplicate history cell for risk `{risk}` in {month}")]
    DuplicateCell { risk: String, month: String },

    #[error("history needs at least two months, got {0}")]
    HistoryTooShort(usize),

    #[error("invalid cross-year mapping: {0}")]
    InvalidMapping(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("observed transition has zero probability (risk {risk}, step {step}): {detail}")]
    ImpossibleData {
        risk: usize,
        step: usize,
        detail: String,
    },

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: String, iterations: usize },

    #[error("network is empty")]
    EmptyNetwork,
}

impl CarpError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            CarpError::Io(_) => ErrorKind::Io,
            CarpError::ImpossibleData { .. } | CarpError::NonConvergence { .. } => {
                ErrorKind::Numerical
            }
            _ => ErrorKind::Data,
        }
    }
}

pub type Result<T, E = CarpError> = std::result::Result<T, E>;
