use thiserror::Error;

/// Errors produced by the solvers and domain operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("grid too coarse: need at least {required} cells, got {actual}")]
    GridTooCoarse { required: usize, actual: usize },

    #[error("field has {actual} values but the grid has {expected} nodes")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("fields live on different grids ({left} vs {right} cells)")]
    GridMismatch { left: usize, right: usize },

    #[error("non-finite value at node {node}")]
    NonFiniteValue { node: usize },

    #[error("left clamp violated: value(0) = {value}")]
    ClampViolated { value: f64 },

    #[error("nonlinear solve did not converge (last residual {residual:e})")]
    NonConvergence { residual: f64 },

    #[error(
        "discrete operator is singular (eigenvalue {eigenvalue:e} within {tolerance:e} of zero)"
    )]
    SingularOperator { eigenvalue: f64, tolerance: f64 },

    #[error("weight must be positive, found {value} at node {node}")]
    InvalidWeight { node: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("H = {h} must exceed max|target''| = {max_curvature}")]
    HTooSmall { h: f64, max_curvature: f64 },

    #[error("target violates the clamp conditions: {0}")]
    BoundaryMismatch(String),

    #[error("no nontrivial branch for H = {h} <= pi^2/4")]
    NoNontrivialBranch { h: f64 },

    #[error("elliptic modulus k = {0} outside [0, 1)")]
    ModulusOutOfRange(f64),

    #[error("line search failed after {iterations} iterations")]
    LineSearchFailure { iterations: usize },

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
