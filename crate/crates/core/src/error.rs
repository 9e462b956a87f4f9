use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("failed to read {path}: {source}")]
    Ingest {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path} is not valid UTF-8")]
    Encoding { path: PathBuf },

    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("provider `{provider}` failed after {attempts} attempt(s): {message}")]
    Provider {
        provider: String,
        status: Option<u16>,
        attempts: u32,
        message: String,
    },

    #[error("unknown node id `{0}`")]
    UnknownNode(String),

    #[error("triple {0} not found")]
    TripleNotFound(usize),

    #[error("triple {id} cannot move from {from} to {to}")]
    InvalidTransition {
        id: usize,
        from: &'static str,
        to: &'static str,
    },

    #[error("unknown provider `{label}` (known: {})", known.join(", "))]
    UnknownProvider { label: String, known: Vec<String> },

    #[error("extraction failed on {failed} of {total} chunks")]
    ExtractionFailed { failed: usize, total: usize },

    #[error("no knowledge graph has been built")]
    GraphNotBuilt,

    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
