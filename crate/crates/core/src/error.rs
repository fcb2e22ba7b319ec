use thiserror::Error;

use crate::reduction::BreakdownReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("vector `{0}` must be nonzero")]
    ZeroVector(&'static str),

    #[error("dense size guard exceeded: {size} > {limit}")]
    SizeGuard { size: usize, limit: usize },

    #[error("reduction broke down: {0}")]
    Breakdown(BreakdownReport),

    #[error("reduction already terminated at iteration {0}")]
    Terminated(usize),

    /// A diagonal entry of the banded triangular factor vanished.
    #[error("singular factor window: zero diagonal at row {row}")]
    SingularWindow { row: usize },

    #[error("matrix is singular or rank deficient ({0})")]
    RankDeficient(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix market parse error (line {line}): {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        });
    }
    Ok(())
}
