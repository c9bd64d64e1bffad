//! Convex quadratic minimization with indicator variables.
//!
//! The problem class: pick a support x in {0,1}^n and nonnegative
//! magnitudes y with y_i = 0 whenever x_i = 0, minimizing
//! a'x + b'y + y'Qy over an optional polyhedron. This crate provides
//! the continuous relaxations of that problem (naive, diagonal
//! perspective, its semidefinite strengthening, and the Shor relaxation),
//! machinery relating them (optimal diagonal extraction, matrix
//! completion between the two semidefinite forms), an enumeration oracle,
//! and a branch-and-bound solver driven by the strongest bound.
//!
//! Everything is generic over the scalar type through [`real::Real`];
//! the `*64` aliases below fix f64, which is what the binaries use.

pub mod bnb;
pub mod completion;
pub mod conic;
pub mod decomposition;
pub mod error;
pub mod formulations;
pub mod instance;
pub mod linalg;
pub mod oracle;
pub mod real;
pub mod rng;
pub mod value;

pub use error::Error;
pub use real::Real;
pub use value::ExtReal;

pub type Instance64 = instance::QiInstance<f64>;
pub type SymMatrix64 = linalg::SymMatrix<f64>;
pub type ConicProgram64 = conic::ConicProgram<f64>;
pub type ConicSolution64 = conic::ConicSolution<f64>;
pub type SolverSettings64 = conic::SolverSettings<f64>;
pub type RelaxationResult64 = formulations::RelaxationResult<f64>;
pub type DiagonalDecomposition64 = decomposition::DiagonalDecomposition<f64>;
pub type CompletionResult64 = completion::CompletionResult<f64>;
pub type OracleResult64 = oracle::OracleResult<f64>;
pub type BnBSettings64 = bnb::BnBSettings<f64>;
pub type BnBReport64 = bnb::BnBReport<f64>;
