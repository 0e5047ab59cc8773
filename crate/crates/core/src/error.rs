use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("singular least-squares system: diagonal factor {pivot:e} below threshold {threshold:e}")]
    SingularSystem { pivot: f64, threshold: f64 },

    #[error("matrix is not symmetric: |a_ij - a_ji| = {deviation:e} exceeds {tolerance:e}")]
    NotSymmetric { deviation: f64, tolerance: f64 },

    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("gradient contains a non-finite entry")]
    NonFiniteGradient,

    #[error("energy domain violated: f(x) + c = {value:e} must be positive")]
    EnergyDomainViolation { value: f64 },

    #[error("iteration diverged at step {iteration} (f = {value:e})")]
    Diverged { iteration: usize, value: f64 },

    #[error("gradient is zero; the run has already converged")]
    ZeroGradient,

    #[error("convergence bound violated at iteration {iteration}: slack {slack:e}")]
    BoundViolated { iteration: usize, slack: f64 },

    #[error("label {value} in row {row} is not -1 or +1")]
    BadLabel { row: usize, value: f64 },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },

    #[error("ragged rows: row {row} has {found} fields, expected {expected}")]
    RaggedRows { row: usize, expected: usize, found: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
