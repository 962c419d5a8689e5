use std::io;

use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An architecture or training configuration violates an invariant.
    #[error("configuration error: {0}")]
    Config(String),

    /// A config file line could not be parsed.
    #[error("configuration error at line {line}: {message}")]
    ConfigLine { line: usize, message: String },

    /// Symbolic shape inference failed (clip too short, map collapsed, ...).
    #[error("shape error: {0}")]
    Shape(String),

    /// Two tensors disagree along an axis.
    #[error("dimension error on axis `{axis}`: {message}")]
    Dimension { axis: String, message: String },

    /// An argument is outside its domain.
    #[error("input error: {0}")]
    Input(String),

    /// A loss or gradient became NaN or infinite.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Video data is malformed or too short.
    #[error("data error: {0}")]
    Data(String),

    /// Binary or text file does not follow its format.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn dim(axis: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Dimension {
            axis: axis.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
