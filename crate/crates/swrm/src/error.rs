//! Crate-wide error types.

use std::path::PathBuf;

use thiserror::Error;

/// Failures of the masked-LM adapter. Transient failures (I/O hiccups on a
/// cache) are worth retrying; permanent ones (missing entry, bad config)
/// are not.
#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("transient adapter failure: {0}")]
    Transient(String),
    #[error("permanent adapter failure: {0}")]
    Permanent(String),
}

impl AdapterError {
    pub fn is_transient(&self) -> bool {
        matches!(self, AdapterError::Transient(_))
    }
}

#[derive(Debug, Error)]
pub enum SwrmError {
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at {}:{line}: {reason}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("schema violation at {}:{line}: {reason}", path.display())]
    Schema {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("lexicon error: {0}")]
    Lexicon(String),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error("adapter failure at position {position}: {source}")]
    AdapterAt {
        position: usize,
        #[source]
        source: AdapterError,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("metric error: {0}")]
    Metric(String),
    #[error("audit error: {0}")]
    Audit(String),
    #[error("training diverged: first non-finite value in {role} (epoch {epoch}, batch {batch})")]
    Divergence {
        role: String,
        epoch: usize,
        batch: usize,
    },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl SwrmError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SwrmError::Io {
            path: path.into(),
            source,
        }
    }
}
