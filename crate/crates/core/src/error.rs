use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain on which the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// `D P_L + P_{L^perp}` could not be factored; the friction matrix is not
    /// positive definite on its range at this composition.
    #[error("singular Bott-Duffin bracket at composition {composition:?}")]
    SingularBracket { composition: Vec<f64> },

    #[error("spectral certification failed: eigenvalue {eigenvalue} outside [{lower}, {upper}] at {composition:?}")]
    Certification {
        eigenvalue: f64,
        lower: f64,
        upper: f64,
        composition: Vec<f64>,
    },

    #[error("singular banded system at pivot {0}")]
    SingularMatrix(usize),

    #[error("Newton failed after {iterations} iterations (residual {residual:e}, eps {eps:e})")]
    NewtonDivergence {
        iterations: usize,
        residual: f64,
        eps: f64,
    },

    /// A sampled matrix identity exceeded its tolerance.
    #[error("verification failed: {0}")]
    Verification(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
