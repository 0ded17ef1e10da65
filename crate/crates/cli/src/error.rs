use std::path::PathBuf;

/// Failures surfaced by the command layer. Each maps to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}:{line}: {reason}")]
    Schema {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{0}")]
    Usage(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    /// The inputs were fine but estimation failed.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Model(gwpcr_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 2,
            CliError::Model(e) if is_numerical(e) => 2,
            _ => 1,
        }
    }

    pub(crate) fn schema(path: &std::path::Path, line: usize, reason: impl Into<String>) -> Self {
        CliError::Schema {
            path: path.to_path_buf(),
            line,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn is_numerical(e: &gwpcr_core::Error) -> bool {
    matches!(
        e,
        gwpcr_core::Error::Singular(_) | gwpcr_core::Error::NoConvergedFit
    )
}

impl From<gwpcr_core::Error> for CliError {
    fn from(e: gwpcr_core::Error) -> Self {
        CliError::Model(e)
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
