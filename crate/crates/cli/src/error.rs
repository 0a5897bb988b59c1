use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Numeric(#[from] rdbs_core::Error),

    #[error("{0}")]
    Failed(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for configuration problems, 3 for numerical or invariant failures,
    /// 1 for file-system errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Numeric(rdbs_core::Error::RobinGainTooSmall { .. })
            | Self::Numeric(rdbs_core::Error::Compatibility { .. })
            | Self::Numeric(rdbs_core::Error::InvalidParameter { .. }) => 2,
            Self::Numeric(_) | Self::Failed(_) => 3,
            Self::Io { .. } => 1,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Numeric(rdbs_core::Error::from(e))
    }
}
