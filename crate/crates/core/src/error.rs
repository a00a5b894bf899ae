use thiserror::Error;

/// Error type shared by all modules in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or violated precondition.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Shape disagreement between an input and a network/environment spec.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// NaN/Inf encountered where a finite value is required.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A linear system that must be solved exactly has no unique solution.
    #[error("singular linear system: {0}")]
    Singular(String),

    /// Malformed file contents.
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
