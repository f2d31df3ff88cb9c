use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config parse error{}: {message}", path.as_ref().map(|p| format!(" in {}", p.display())).unwrap_or_default())]
    Parse { path: Option<PathBuf>, message: String },
    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("no run traces found under {0}")]
    MissingTraces(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Objective(#[from] cafe_core::ObjectiveError),
    #[error(transparent)]
    Run(#[from] cafe_core::RunError),
    #[error(transparent)]
    Theory(#[from] cafe_core::TheoryError),
    #[error(transparent)]
    Compress(#[from] cafe_core::CompressError),
}

impl HarnessError {
    /// Configuration and usage problems exit with 1.
    pub fn is_config_error(&self) -> bool {
        matches!(self, Self::Parse { .. } | Self::Config { .. })
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
