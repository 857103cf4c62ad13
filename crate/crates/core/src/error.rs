use thiserror::Error;

/// Errors produced by the simulation, QFI and estimation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code for the CLI: 1 for numerical failures, 2 for
    /// configuration or contract violations.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) | Error::Fit(_) | Error::Io(_) => 1,
            Error::Shape(_) | Error::Validation(_) | Error::Unsupported(_) | Error::Config(_) => 2,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
