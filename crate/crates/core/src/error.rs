use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("empty batch")]
    EmptyBatch,
    #[error("replay buffer is empty")]
    EmptyBuffer,
    #[error("parameter shape mismatch: expected {expected} values, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("dual solver diverged: {0}")]
    SolverDiverged(&'static str),
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("environment produced a non-finite state")]
    NonFiniteState,
    #[error("unknown environment `{0}`")]
    UnknownEnvironment(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
