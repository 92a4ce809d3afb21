use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("not polysymplectic: {0}")]
    NotPolysymplectic(String),
    #[error("degenerate basis correction: {0}")]
    Degenerate(String),
    #[error("structure is not metric-compatible (residual {0:e})")]
    NotCompatible(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("potential is not convex at the requested point (min eigenvalue {0:e})")]
    NotConvexHere(f64),
    #[error("point outside the chart domain")]
    OutsideDomain,
    #[error("torus data is not self-dual: l1*l2 = {0}")]
    NotSelfDual(f64),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no convergence after {0} rounds")]
    NonConvergence(usize),
    #[error("frequency {0} exceeds truncation order {1}")]
    FrequencyOverflow(i64, u32),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, GeometryError>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(GeometryError::DimensionMismatch { expected, found })
    }
}
