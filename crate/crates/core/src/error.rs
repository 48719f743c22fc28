use thiserror::Error;

/// Errors raised by the estimator pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("parameter component y[{index}] = {value} lies outside [-1/2, 1/2]")]
    ParameterOutOfRange { index: usize, value: f64 },

    #[error("point {point:?} lies outside the domain")]
    PointOutsideDomain { point: Vec<f64> },

    #[error("basis has {available} terms but {requested} were requested")]
    TruncationTooLarge { requested: usize, available: usize },

    #[error("gradient norm of fluctuation {index} is unavailable")]
    MissingGradientNorm { index: usize },

    #[error("sequence is not nonincreasing at index {index}")]
    NotMonotone { index: usize },

    #[error("level {level} exceeds the maximum level {max_level}")]
    LevelOutOfRange { level: usize, max_level: usize },

    #[error("coefficient lower bound violated: value {value} below a_min {a_min}")]
    EllipticityViolated { value: f64, a_min: f64 },

    #[error("stiffness matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("linear solve residual {residual:e} exceeds tolerance {tolerance:e} (pivot ratio {pivot_ratio:e})")]
    SolverBreakdown {
        residual: f64,
        tolerance: f64,
        pivot_ratio: f64,
    },

    #[error("assembly mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("mesh and basis are defined on different domains")]
    DomainMismatch,

    #[error("{value} is not prime")]
    NotPrime { value: u64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("inconsistent plan request: {0}")]
    InconsistentPlan(String),

    #[error("cap exceeded: {what} = {value} > {cap}")]
    CapExceeded { what: &'static str, value: f64, cap: f64 },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
