use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library reports.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: file not found")]
    MissingFile { path: PathBuf },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: cannot decode image: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{stage} failed for {path}: {source}")]
    Stage {
        stage: &'static str,
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile { path }
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Attaches the pipeline stage and offending file to an error.
    pub fn at_stage(self, stage: &'static str, path: impl Into<PathBuf>) -> Self {
        Error::Stage {
            stage,
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by input data (as opposed to bad arguments).
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::MissingFile { .. }
            | Error::Io { .. }
            | Error::Decode { .. }
            | Error::Format { .. }
            | Error::Dataset(_)
            | Error::DimensionMismatch(_) => true,
            Error::InvalidArgument(_) | Error::Config(_) => false,
            Error::Stage { source, .. } => source.is_data_error(),
        }
    }

    /// True for errors caused by a bad argument or configuration.
    pub fn is_usage_error(&self) -> bool {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => true,
            Error::Stage { source, .. } => source.is_usage_error(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
