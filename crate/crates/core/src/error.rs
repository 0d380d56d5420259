use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Error)]
pub enum GaiError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// The estimator cannot consume this kind of auxiliary signal.
    #[error("estimator `{estimator}` is inapplicable: {reason}")]
    Inapplicable { estimator: String, reason: String },

    #[error("fold {fold} has no primary observations in its complement")]
    EmptyFoldComplement { fold: usize },

    #[error("information matrix is ill-conditioned (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GaiError>;

impl GaiError {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        GaiError::Input(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        GaiError::Dimension(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        GaiError::Config(msg.into())
    }
}
