use std::path::PathBuf;

/// Errors raised by the library. The CLI maps these onto exit codes:
/// configuration problems exit 2, data problems exit 3, numerical
/// failures exit 4.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure in {stage}: {msg}")]
    Numerical { stage: String, msg: String },
}

impl Error {
    pub fn numerical(stage: &str, msg: impl Into<String>) -> Self {
        Error::Numerical {
            stage: stage.to_string(),
            msg: msg.into(),
        }
    }

    /// Exit code class for the CLI contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io { .. } | Error::Parse { .. } | Error::Data(_) | Error::Dimension(_) => 3,
            Error::Numerical { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
