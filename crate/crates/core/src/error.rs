use alloc::string::String;

/// Errors reported by the numerical pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("mesh is not a valid conforming triangulation: {0}")]
    InvalidMesh(String),
    #[error("form {form} cannot couple {row} with {col}")]
    IncompatibleSpaces {
        form: &'static str,
        row: &'static str,
        col: &'static str,
    },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("zero pivot at column {0} in symmetric factorization")]
    SingularMatrix(usize),
    #[error("requested {requested} eigenvalues but the pencil has only {available} finite ones")]
    TooManyEigenvalues { requested: usize, available: usize },
    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("dense analysis limited to dimension {limit}, pencil has {dim}")]
    DenseLimit { dim: usize, limit: usize },
    #[error("eigenvalue family counts disagree: structural {structural:?}, dense {dense:?}")]
    FamilyMismatch {
        structural: (usize, usize),
        dense: (usize, usize),
    },
}

pub type Result<T> = core::result::Result<T, Error>;
