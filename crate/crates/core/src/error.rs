use thiserror::Error;

/// Errors produced by the decomposition library.
#[derive(Debug, Error)]
pub enum FcpError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate component: {0}")]
    DegenerateComponent(String),

    #[error("singular configuration at mode {mode}: {reason}")]
    SingularConfiguration { mode: usize, reason: String },

    #[error("no closed form: {0}")]
    NoClosedForm(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FcpError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(FcpError::InvalidArgument(msg.into()))
}
