use ddl_core::DdlError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable, malformed or inconsistent input files, flags or configs.
    #[error("{0}")]
    Input(String),

    #[error("every requested target has a degenerate denominator")]
    AllDegenerate,

    #[error(transparent)]
    Core(DdlError),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::AllDegenerate => 3,
            CliError::Core(_) | CliError::Io { .. } => 1,
        }
    }
}

/// Problems with the data or parameters count as bad input; the rest are internal failures.
impl From<DdlError> for CliError {
    fn from(e: DdlError) -> Self {
        match e {
            DdlError::NonFinite
            | DdlError::InvalidParameter(_)
            | DdlError::DimensionMismatch { .. }
            | DdlError::IndexOutOfRange { .. }
            | DdlError::OutOfRange(_) => CliError::Input(e.to_string()),
            other => CliError::Core(other),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
