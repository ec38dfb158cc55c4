use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: missing key `{0}`")]
    MissingKey(String),
    #[error("config: key `{key}` {reason}")]
    InvalidKey { key: String, reason: String },
    #[error("config: cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("SCF did not converge at cutoff {cutoff} after {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        cutoff: f64,
        iterations: usize,
        residual: f64,
    },
    #[error("cutoff {cutoff}: {source}")]
    AtCutoff {
        cutoff: f64,
        #[source]
        source: mks_core::Error,
    },
    #[error(transparent)]
    Core(#[from] mks_core::Error),
    #[error("decay fit: {0}")]
    Fit(String),
    #[error("check failed: {0}")]
    Check(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Exit status of the command line tool.
pub const EXIT_OK: i32 = 0;
pub const EXIT_PHYSICS: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

fn core_is_input_error(e: &mks_core::Error) -> bool {
    use mks_core::Error::*;
    matches!(
        e,
        InvalidCutoff(_) | DegenerateCell(_) | InvalidParameter(_) | InfeasibleElectronCount { .. }
    )
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(key: &str, reason: impl Into<String>) -> Self {
        HarnessError::InvalidKey {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::MissingKey(_)
            | HarnessError::InvalidKey { .. }
            | HarnessError::Parse { .. }
            | HarnessError::Io { .. } => EXIT_CONFIG,
            HarnessError::Core(e) | HarnessError::AtCutoff { source: e, .. } if core_is_input_error(e) => {
                EXIT_CONFIG
            }
            _ => EXIT_PHYSICS,
        }
    }
}
