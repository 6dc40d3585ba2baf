use thiserror::Error;

/// Failures of a CLI command, each mapped to a process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Unparseable input, schema violations and bad flags.
    #[error("{0}")]
    Schema(String),
    /// Some tracks could not be corrected; output was still written.
    #[error("{failed} of {total} tracks failed numerically")]
    Numerical { failed: usize, total: usize },
    /// A computation failed after its inputs were accepted.
    #[error("{0}")]
    Computation(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Numerical { .. } | CliError::Computation(_) => 3,
            CliError::Io { .. } => 1,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
