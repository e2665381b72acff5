//! Error types shared across the pipeline.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage a backend call belongs to. Carried on transport errors so
/// failures can be attributed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Embed,
    Retrieve,
    Score,
    Generate,
    Judge,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Embed => "embed",
            Stage::Retrieve => "retrieve",
            Stage::Score => "score",
            Stage::Generate => "generate",
            Stage::Judge => "judge",
        })
    }
}

/// Failure talking to a model backend.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum TransportError {
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("backend returned HTTP {code}: {message}")]
    Status { code: u16, message: String },
    #[error("malformed backend response: {0}")]
    Malformed(String),
}

impl TransportError {
    /// Timeouts, connection failures, 429 and 5xx are worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Timeout(_) | TransportError::Connect(_) => true,
            TransportError::Status { code, .. } => *code == 429 || *code >= 500,
            TransportError::Malformed(_) => false,
        }
    }
}

/// Failure reading a persisted index file.
#[derive(Debug, Error, PartialEq)]
pub enum IndexFormatError {
    #[error("not an index file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported index format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("index file truncated: need at least {needed} bytes, found {found}")]
    Truncated { needed: u64, found: u64 },
    #[error("index checksum mismatch")]
    ChecksumMismatch,
    #[error("malformed index file: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("cannot read corpus directory {}: {source}", path.display())]
    CorpusDir {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{stage} backend failed{}: {source}", index.map(|i| format!(" at item {i}")).unwrap_or_default())]
    Backend {
        stage: Stage,
        index: Option<usize>,
        #[source]
        source: TransportError,
    },

    #[error("index build aborted after embedding {embedded} of {total} chunks: {source}")]
    IndexBuild {
        embedded: usize,
        total: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    IndexFormat(#[from] IndexFormatError),

    #[error("malformed record in {context}: {message}")]
    Record { context: String, message: String },

    #[error("evaluation error: {0}")]
    Eval(String),
}

/// Coarse error classes, used by the CLI to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Ingestion,
    Transport,
    Contract,
    Other,
}

impl Error {
    pub fn backend(stage: Stage, source: TransportError) -> Self {
        Error::Backend {
            stage,
            index: None,
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Param(_) => ErrorClass::Config,
            Error::CorpusDir { .. } => ErrorClass::Ingestion,
            Error::Backend { .. } => ErrorClass::Transport,
            Error::Contract(_) | Error::Domain(_) => ErrorClass::Contract,
            Error::IndexBuild { source, .. } => source.class(),
            Error::Io { .. } | Error::IndexFormat(_) | Error::Record { .. } | Error::Eval(_) => ErrorClass::Other,
        }
    }

    /// Stage attribution, when the error came from a backend.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Backend { stage, .. } => Some(*stage),
            Error::IndexBuild { source, .. } => source.stage(),
            _ => None,
        }
    }

    /// Re-attribute a backend error to another stage (e.g. an embed failure
    /// that happened while serving a retrieval).
    pub fn in_stage(self, stage: Stage) -> Self {
        match self {
            Error::Backend { index, source, .. } => Error::Backend { stage, index, source },
            other => other,
        }
    }
}

/// A non-fatal condition recorded during a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub subject: String,
    pub message: String,
}

impl Warning {
    pub fn new(subject: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            subject: subject.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}
