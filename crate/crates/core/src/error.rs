use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid cutout: {0}")]
    InvalidCutout(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("zero diagonal entry in row {0}")]
    ZeroDiagonal(usize),

    #[error("matrix is singular (pivot {pivot:e} at column {column})")]
    Singular { column: usize, pivot: f64 },

    #[error("matrix is not symmetric (|a_ij - a_ji| = {0:e})")]
    NotSymmetric(f64),

    #[error("factorization failed at row {0}: matrix not positive definite")]
    NotPositiveDefinite(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("system has no Dirichlet degrees of freedom (stiffness matrix singular)")]
    NoDirichlet,

    #[error("system has no free degrees of freedom")]
    NoFreeDofs,

    #[error("ill-conditioned kernel matrix (condition estimate {0:e})")]
    IllConditioned(f64),

    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
