//! Crate-wide error type. Callers match on variants to decide whether a
//! failure should abort a run or degrade to an empty result.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A JSON Lines record that failed to parse or validate.
    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate passage id {id:?} at {path}:{line}")]
    DuplicateId {
        path: PathBuf,
        line: usize,
        id: String,
    },

    #[error("query {query_id:?} references unknown passage id {passage_id:?}")]
    UnknownGoldId {
        query_id: String,
        passage_id: String,
    },

    #[error("invalid config: {0}")]
    Config(String),

    /// Extraction backend failure. `fatal` distinguishes systemic problems
    /// (bad credentials, unreachable host on every attempt) from per-call
    /// ones that indexing is allowed to degrade over.
    #[error("backend {name}: {message}")]
    Backend {
        name: String,
        message: String,
        fatal: bool,
    },

    /// Replay backend had no response recorded for this input.
    #[error("no fixture recorded for key {key}")]
    FixtureMiss { key: String },

    #[error("embedding provider {name}: {message}")]
    Embedding { name: String, message: String },

    /// Persisted index is missing, corrupt, or from an unknown format.
    #[error("index file {path}: {message}")]
    IndexFormat { path: PathBuf, message: String },

    /// Precondition or alignment violation in library usage.
    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when an indexing run may swallow this failure for one passage
    /// and keep going. Everything else aborts.
    pub fn is_degradable(&self) -> bool {
        match self {
            Error::Backend { fatal, .. } => !fatal,
            Error::FixtureMiss { .. } => true,
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degradable_covers_transient_backend_failures_only() {
        let transient = Error::Backend {
            name: "remote".into(),
            message: "timeout".into(),
            fatal: false,
        };
        let fatal = Error::Backend {
            name: "remote".into(),
            message: "401 unauthorized".into(),
            fatal: true,
        };
        let miss = Error::FixtureMiss { key: "ab12".into() };
        assert!(transient.is_degradable());
        assert!(!fatal.is_degradable());
        assert!(miss.is_degradable());
        assert!(!Error::Config("x".into()).is_degradable());
    }

    #[test]
    fn messages_name_the_offender() {
        let err = Error::DuplicateId {
            path: "corpus.jsonl".into(),
            line: 7,
            id: "p1".into(),
        };
        assert!(err.to_string().contains("p1"));
        assert!(err.to_string().contains(":7"));
    }
}
