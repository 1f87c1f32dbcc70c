use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = ChefError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ChefError {
    #[error("format error: {0}")]
    Format(String),
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("training diverged at iteration {iteration}")]
    Divergence { iteration: usize },
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("sample {0} is not in the provenance cache")]
    CacheMiss(usize),
    #[error("L-BFGS history is empty")]
    History,
    #[error("annotations missing for samples {0:?}")]
    IncompleteAnnotation(Vec<usize>),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ChefError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ChefError::Io {
            path: path.into(),
            source,
        }
    }
}
