use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid construction parameters (grid, kernel, material, time grid).
    #[error("configuration error: {0}")]
    Config(String),

    /// A kernel failed one of the admissibility conditions at construction.
    #[error("kernel rejected: {0}")]
    Kernel(String),

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    Solver { iterations: usize, residual: f64 },

    /// Factorization hit a non-positive pivot.
    #[error("matrix is not positive definite (pivot {pivot:.3e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    /// A collar dof was touched or a state left the constrained space.
    #[error("constraint violation: {0}")]
    Constraint(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("degenerate element {element} (measure {measure:.3e})")]
    DegenerateElement { element: usize, measure: f64 },

    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
