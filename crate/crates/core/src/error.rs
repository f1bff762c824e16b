use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot open {path}: {source}")]
    Open { path: PathBuf, source: io::Error },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    #[error("write failed after {written} records: {source}")]
    PartialWrite { written: usize, source: io::Error },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Tokenizer(#[from] crate::bbpe::TokenizerError),

    #[error(transparent)]
    Composer(#[from] crate::char_composer::ComposerError),

    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),

    #[error(transparent)]
    Harness(#[from] crate::harness::HarnessError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
