use thiserror::Error;

/// Errors produced by model construction, the solvers and the oracle.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("eigensolver failed on a {dim}x{dim} matrix")]
    Numerical { dim: usize },

    #[error("translation symmetry broken: residue {residue:e} exceeds {tolerance:e}")]
    BrokenSymmetry { residue: f64, tolerance: f64 },

    #[error("solver diverged at iteration {iteration}: energy per site {energy}")]
    Divergence { iteration: usize, energy: f64 },

    #[error("Hilbert space dimension {dim} exceeds the dense cap {cap}; use the Lanczos oracle")]
    OracleTooLarge { dim: usize, cap: usize },

    #[error("pair ({0}, {1}): {2}")]
    Pair(usize, usize, Box<Error>),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn at_pair(self, i: usize, j: usize) -> Self {
        Error::Pair(i, j, Box::new(self))
    }
}
