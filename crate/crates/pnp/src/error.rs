//! File and format errors for the IO layer. Model-level errors pass
//! through from the core crate.

use std::path::Path;

#[derive(thiserror::Error, Debug)]
pub enum FileError {
    #[error("{path}: {error}")]
    Io { path: String, error: std::io::Error },
    #[error("{path}: {detail}")]
    Format { path: String, detail: String },
    #[error(transparent)]
    Model(#[from] pnp_core::Error),
}

pub type Result<T> = std::result::Result<T, FileError>;

impl FileError {
    pub fn io(path: &Path, error: std::io::Error) -> Self {
        FileError::Io { path: path.display().to_string(), error }
    }

    pub fn format(path: &Path, detail: impl Into<String>) -> Self {
        FileError::Format { path: path.display().to_string(), detail: detail.into() }
    }
}
