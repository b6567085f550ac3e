use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum BwError {
    /// Invalid input: non-finite entries, broken invariants, bad parameters.
    #[error("invalid input: {0}")]
    Input(String),

    /// Two operands live in different dimensions.
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    /// A matrix is singular beyond the requested rank tolerance.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// The optimal transport map does not exist: ker(F) is not contained in ker(G).
    #[error("kernel nesting violated: {0}")]
    KernelMismatch(String),

    /// An iteration produced non-finite values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A Monte Carlo experiment failed its internal consistency checks.
    #[error("experiment failed: {0}")]
    Experiment(String),

    /// File or text format problems.
    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, BwError>;

impl BwError {
    pub fn input(msg: impl Into<String>) -> Self {
        BwError::Input(msg.into())
    }
}
