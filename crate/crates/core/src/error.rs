//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GlomError {
    /// Shapes, extents, or hyperparameters that do not fit together.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation called outside its contract.
    #[error("usage error: {0}")]
    Usage(String),

    /// NaN/Inf reached a place where values must be finite.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Bad magic, version mismatch, or truncated/corrupt serialized data.
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, GlomError>;

impl GlomError {
    pub fn config(msg: impl Into<String>) -> Self {
        GlomError::Config(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        GlomError::Usage(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        GlomError::Numeric(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        GlomError::Format(msg.into())
    }
}
