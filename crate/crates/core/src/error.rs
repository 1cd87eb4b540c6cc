use thiserror::Error;

/// Errors produced anywhere in the transfer pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point set is empty")]
    EmptyPointSet,

    #[error("point {index} has a non-finite coordinate")]
    NonFinitePoint { index: usize },

    #[error("source points {first} and {second} coincide")]
    DuplicatePoint { first: usize, second: usize },

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported quadrature order {0} (expected 1, 2 or 3)")]
    UnsupportedQuadrature(usize),

    #[error("entry ({row}, {col}) out of range for a {rows}x{cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("zero diagonal entry in row {row}")]
    ZeroDiagonal { row: usize },

    #[error("GMRES breakdown after {iterations} iterations (relative residual {residual:e})")]
    Breakdown { iterations: usize, residual: f64 },

    #[error("GMRES did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("cardinal function solve failed for source point {index}: {source}")]
    CardinalSolve {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("singular local system")]
    SingularMatrix,

    #[error("destination point {index} is not covered by any source support (denominator {value:e})")]
    Uncovered { index: usize, value: f64 },

    #[error("tensor at point {index} has non-positive determinant {det:e}")]
    NonPositiveDeterminant { index: usize, det: f64 },

    #[error("tensor has a zero singular value")]
    ZeroSingularValue,

    #[error("singular factors have opposite orientation (det U * det V = {0})")]
    ImproperFactors(f64),

    #[error("matrix is not a proper rotation (orthogonality error {orthogonality:e}, det {det})")]
    NotRotation { orthogonality: f64, det: f64 },

    #[error("degenerate quaternion (norm {norm:e})")]
    DegenerateQuaternion { norm: f64 },

    #[error("at source point {index}: {source}")]
    AtSource {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("at destination point {index}: {source}")]
    AtDestination {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
