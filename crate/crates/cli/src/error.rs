use carp_core::{CarpError, ErrorKind};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Clap(#[from] clap::Error),
    #[error("config {path}: {reason}")]
    Config { path: String, reason: String },
    #[error(transparent)]
    Core(#[from] CarpError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("input {path} changed since the manifest was written")]
    InputChanged { path: String },
    #[error("replay diverged: {0}")]
    ReplayMismatch(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 1 usage or configuration, 2 invalid data, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Clap(_) | CliError::Config { .. } | CliError::Io(_) | CliError::Read { .. } => 1,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Io => 1,
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            },
            CliError::Json(_) | CliError::Csv(_) | CliError::InputChanged { .. } => 2,
            CliError::ReplayMismatch(_) => 3,
        }
    }
}
