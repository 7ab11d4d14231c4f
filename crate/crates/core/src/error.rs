use thiserror::Error;

/// Errors produced by tensor, assembly and solver routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mode size mismatch: {0}")]
    ModeMismatch(String),

    #[error("invalid tensor train: {0}")]
    InvalidShape(String),

    #[error("dense size cap exceeded: {size} entries > cap {cap}")]
    SizeCapExceeded { size: usize, cap: usize },

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("local solve failed: {0}")]
    LocalSolve(String),

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArg(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("invalid file format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
