use thiserror::Error;

use crate::conic::SolveStatus;
use crate::stote::JamiolkowskiReport;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("not a density matrix: {0}")]
    InvalidState(String),
    #[error("marginal is not positive semi-definite (min eigenvalue {0:e})")]
    InvalidMarginal(f64),
    #[error("state is not faithful (min eigenvalue {0:e})")]
    NotFaithful(f64),
    #[error("not a valid Jamiolkowski matrix: {0}")]
    InvalidChannel(JamiolkowskiReport),
    #[error("not a state over time: {0}")]
    NotAStote(JamiolkowskiReport),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("states are not isospectral (spectral distance {0:e})")]
    NotIsospectral(f64),
    #[error("conic solver stopped with status {status:?} (primal {primal_residual:e}, dual {dual_residual:e})")]
    Solver {
        status: SolveStatus,
        primal_residual: f64,
        dual_residual: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
