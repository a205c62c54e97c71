use thiserror::Error;

/// Failures reported by the library. Each variant maps to one class of
/// problem so the CLI can pick an exit code without string matching.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Evaluation outside the domain of a function (r ≤ 0, straight-back turn).
    #[error("domain error: {0}")]
    Domain(String),
    /// Bad argument from the caller (order out of range, N too small, ...).
    #[error("invalid argument: {0}")]
    Argument(String),
    /// Degenerate geometry such as coincident neighbors.
    #[error("geometry error: {0}")]
    Geometry(String),
    /// Operation needs a uniform reference chain.
    #[error("precondition failed: {0}")]
    Precondition(String),
    /// Cholesky factorization hit a non-positive pivot.
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    /// Linear system is numerically singular.
    #[error("matrix is singular to working precision")]
    Singular,
    /// Bracketed root search without a sign change.
    #[error("no sign change on [{a}, {b}]")]
    NoSignChange { a: f64, b: f64 },
    /// Second variation is not positive definite where it must be.
    #[error("unstable configuration: numeric infimum {numeric_inf:e}")]
    Unstable { numeric_inf: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
