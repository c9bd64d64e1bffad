//! Crate-wide error type. Validation failures, parse failures, and solver
//! status misuse stay distinguishable so callers can map them to exit codes.

use thiserror::Error;

use crate::conic::SolveStatus;
use crate::instance::Violation;

#[derive(Debug, Error)]
pub enum Error {
    /// Dimension or structural mismatch in matrix/vector data.
    #[error("shape error: {0}")]
    Shape(String),

    /// NaN or infinity where finite data is required.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// Numerical failure inside a kernel (factorization breakdown and the like).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Instance invariants do not hold.
    #[error("invalid instance:\n{}", crate::instance::render_violations(.0))]
    Invalid(Vec<Violation>),

    /// Malformed input file (JSON syntax or schema).
    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A diagonal d with Q - diag(d) indefinite beyond tolerance.
    #[error("diagonal infeasible: min eig(Q - diag(d)) = {min_eig:e} is below -{tol:e}")]
    InfeasibleDiagonal { min_eig: f64, tol: f64 },

    /// Bad argument to an operation (sizes, parameter ranges).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An operation needed an optimal solve and got something else.
    #[error("solver finished with {0:?} where Optimal was required")]
    NotOptimal(SolveStatus),

    /// Dual information required but absent from the solution.
    #[error("missing duals: {0}")]
    MissingDuals(&'static str),

    /// Enumeration size guard.
    #[error("instance too large: n = {n} exceeds the limit {limit}")]
    TooLarge { n: usize, limit: usize },
}
