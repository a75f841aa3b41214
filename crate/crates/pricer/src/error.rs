use std::path::PathBuf;

use lmm_pde::PdeError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("missing required key `{key}` in section [{section}]")]
    MissingKey { section: String, key: String },

    #[error("reference unavailable: {0}")]
    ReferenceUnavailable(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Pde(#[from] PdeError),
}

pub type Result<T> = std::result::Result<T, CliError>;
