use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value violates a documented precondition.
    #[error("invalid {what}: {reason}")]
    Validation { what: &'static str, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed input data, with the 1-indexed line where it was found.
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: u64,
        message: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(source_name: impl Into<String>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code for the command-line tool: 2 configuration,
    /// 3 data or parse, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation { .. } | Error::Config(_) => 2,
            Error::Parse { .. } | Error::Io(_) => 3,
            Error::Numerical(_) => 4,
        }
    }
}
