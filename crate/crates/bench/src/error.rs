use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config line {line}: {reason}")]
    ConfigLine { line: usize, reason: String },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Engine(#[from] lsmclab::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("compare: {0}")]
    Compare(String),
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

impl BenchError {
    pub fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        BenchError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit status: 2 for bad input, 3 for a broken engine invariant.
    pub fn exit_code(&self) -> u8 {
        use lsmclab::Error as E;
        match self {
            BenchError::ConfigLine { .. } | BenchError::Config(_) | BenchError::Compare(_) => 2,
            BenchError::Engine(E::InvalidArgument(_) | E::Parse { .. } | E::Generation(_)) => 2,
            BenchError::Engine(E::Invariant(_) | E::Corruption { .. } | E::Manifest(_)) => 3,
            BenchError::Engine(E::Io(_)) | BenchError::Io { .. } => 1,
        }
    }
}
