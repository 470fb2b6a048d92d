use thiserror::Error;

/// Errors raised across the solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("breakpoints in direction {direction} are not strictly increasing")]
    NonMonotoneBreakpoints { direction: usize },
    #[error("direction {direction} has {cells} elements; at least 3 are required")]
    TooFewElements { direction: usize, cells: usize },
    #[error("unsupported dimension {0}; expected 1 or 2")]
    UnsupportedDimension(usize),
    #[error("unsupported order k={0}; supported orders are 2 and 5")]
    UnsupportedOrder(usize),
    #[error("element index {0} out of range")]
    InvalidElement(usize),
    #[error("point ({x}, {y}) lies outside the domain")]
    PointOutsideDomain { x: f64, y: f64 },
    #[error("Gauss-Legendre node iteration did not converge for n={0}")]
    NoConvergence(usize),
    #[error("matrix is exactly singular (zero pivot at column {0})")]
    ExactSingular(usize),
    #[error("reconstruction matrix of element {element} is singular (condition estimate {condition:e})")]
    SingularMatrix { element: usize, condition: f64 },
    #[error("iterative solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("IMEX tableau order condition violated: {condition} (residual {residual:e})")]
    OrderConditionViolation { condition: &'static str, residual: f64 },
    #[error("non-finite state detected at t={time} after {steps} steps")]
    NonFiniteState { time: f64, steps: usize },
    #[error("invalid time interval or step: {0}")]
    InvalidTimeStep(String),
    #[error("a convergence study needs at least two meshes")]
    NeedTwoMeshes,
    #[error("unknown problem '{0}'")]
    UnknownProblem(String),
    #[error("malformed input: {0}")]
    Parse(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
