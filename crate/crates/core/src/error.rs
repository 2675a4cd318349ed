use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian: relative Frobenius asymmetry {0:.3e}")]
    NotHermitian(f64),

    #[error("matrix is near-singular: condition number {0:.3e}")]
    NearSingular(f64),

    #[error("unsupported dimension d={d}: {hint}")]
    UnsupportedDimension { d: usize, hint: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("attainability condition violated (defect {0:.3e}); use the random measurement instead")]
    NotAttainable(f64),

    #[error("optimizer did not converge: {0}")]
    NoConvergence(String),

    #[error("all {0} trials failed")]
    AllTrialsFailed(usize),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
