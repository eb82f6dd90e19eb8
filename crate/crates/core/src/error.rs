use thiserror::Error;

/// Errors raised by the numerical pipelines.
#[derive(Debug, Error)]
pub enum QdomError {
    #[error("bessel order {0} is not in the admissible set {{0, 1/2, 1, 3/2}}")]
    OrderDomain(String),
    #[error("argument outside the function domain: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("placement error: {0}")]
    Placement(String),
    #[error("box too small: {0}")]
    BoxTooSmall(String),
    #[error("operator is not positive definite on the active set ({0}); check k against the first Dirichlet eigenvalue")]
    Indefinite(String),
    #[error("solver did not converge: {0}")]
    NotConverged(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("total field vanishes on {count} obstacle node(s), first at {first:?}")]
    DivisionSingularity { count: usize, first: Vec<f64> },
    #[error("physical validity: {0}")]
    PhysicalValidity(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
}

/// Coarse classification used by the command line front end for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Hypothesis,
    Solver,
}

impl QdomError {
    pub fn class(&self) -> ErrorClass {
        use QdomError::*;
        match self {
            OrderDomain(_) | Domain(_) | Config(_) | GridMismatch(_) | Placement(_) | Io(_)
            | Format(_) => ErrorClass::Config,
            Hypothesis(_)
            | BoxTooSmall(_)
            | DivisionSingularity { .. }
            | PhysicalValidity(_)
            | Resolution(_) => ErrorClass::Hypothesis,
            Indefinite(_) | NotConverged(_) => ErrorClass::Solver,
        }
    }
}

pub type Result<T> = std::result::Result<T, QdomError>;
