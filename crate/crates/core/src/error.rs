use std::io;

use thiserror::Error;

use crate::storage::FileId;

/// Errors surfaced by the engine, the workload tooling and the cost model.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("file {file_id} is corrupted: {reason}")]
    Corruption { file_id: FileId, reason: String },

    #[error("manifest is corrupted: {0}")]
    Manifest(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("workload generation failed: {0}")]
    Generation(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
