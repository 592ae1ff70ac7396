use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical abort at generation {generation}: {reason}")]
    NumericalAbort { generation: u64, reason: String },

    #[error("verification failed: {0}")]
    VerificationFailed(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] hebb_core::Error),

    #[error(transparent)]
    Env(#[from] hebb_envlab::EnvError),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for configuration problems, 3 for numerical
    /// aborts, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Env(_) => 2,
            HarnessError::Core(e) if is_config_like(e) => 2,
            HarnessError::NumericalAbort { .. } => 3,
            _ => 1,
        }
    }
}

fn is_config_like(e: &hebb_core::Error) -> bool {
    use hebb_core::Error::*;
    matches!(
        e,
        InvalidTopology(_) | InvalidConfig(_) | InvalidModel(_) | RhoOutOfRange { .. }
    )
}

pub type Result<T> = std::result::Result<T, HarnessError>;
