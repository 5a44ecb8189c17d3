use thiserror::Error;

/// Errors surfaced by sketch construction, streaming updates and estimation.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller passed a dimension, index or parameter outside the valid range.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A sketch specification is internally inconsistent (zero dims,
    /// sparsity exceeding the target dimension, and so on).
    #[error("invalid sketch spec: {0}")]
    InvalidSpec(String),

    /// Two sketch states cannot be merged or composed because their
    /// specifications disagree.
    #[error("incompatible sketch states: {0}")]
    Incompatible(String),

    /// An iterative numerical routine failed to converge or produced a
    /// non-finite value.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The requested norm order is outside the supported range.
    #[error("unsupported p = {0}: need finite p > 2")]
    UnsupportedP(f64),

    /// A text record (stream line, header, snapshot field) failed to parse.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
