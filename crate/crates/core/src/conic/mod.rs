//! Self-contained first-order solver for conic programs
//!
//! ```text
//! minimize    c'z
//! subject to  h - A z in K1 x K2 x ... x Kp
//! ```
//!
//! with the cones of [`cones::Cone`]. The solver is an ADMM splitting with
//! over-relaxation, diagonal (Ruiz) equilibration, and a deterministic
//! adaptive step-size rule; see [`solver`].

pub mod cones;
mod solver;

use std::io::Write;

use serde::Serialize;

pub use cones::{
    project_cone, project_dual_cone, project_psd, svec_index, svec_pack, svec_unpack, Cone,
};
pub use solver::solve;

use crate::error::Error;
use crate::linalg::{dot, norm2, Mat};
use crate::real::Real;

/// Data of one conic program. Rows of `a` / entries of `h` are grouped by
/// the cone list, in order.
#[derive(Debug, Clone)]
pub struct ConicProgram<T> {
    pub num_vars: usize,
    pub c: Vec<T>,
    pub a: Mat<T>,
    pub h: Vec<T>,
    pub cones: Vec<Cone>,
    /// Constant added to c'z when reporting objective values.
    pub obj_offset: T,
}

impl<T: Real> ConicProgram<T> {
    pub fn total_cone_dim(&self) -> usize {
        self.cones.iter().map(|c| c.dim()).sum()
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.c.len() != self.num_vars {
            return Err(Error::Shape(format!(
                "c has length {}, expected num_vars = {}",
                self.c.len(),
                self.num_vars
            )));
        }
        if self.a.cols() != self.num_vars {
            return Err(Error::Shape(format!(
                "A has {} columns, expected num_vars = {}",
                self.a.cols(),
                self.num_vars
            )));
        }
        let m = self.total_cone_dim();
        if self.a.rows() != m || self.h.len() != m {
            return Err(Error::Shape(format!(
                "A has {} rows and h has {}, cones require {m}",
                self.a.rows(),
                self.h.len()
            )));
        }
        for cone in &self.cones {
            cone.validate()?;
        }
        if !self.a.is_finite()
            || self.c.iter().any(|v| !v.is_finite())
            || self.h.iter().any(|v| !v.is_finite())
            || !self.obj_offset.is_finite()
        {
            return Err(Error::NonFinite("conic program data"));
        }
        Ok(())
    }
}

/// Solver knobs. `rho` is the ADMM penalty (adapted during the run from
/// this starting value), `alpha` the over-relaxation parameter, and
/// `scaling` toggles Ruiz equilibration.
#[derive(Debug, Clone, Serialize)]
pub struct SolverSettings<T> {
    pub eps_abs: T,
    pub eps_rel: T,
    pub max_iters: usize,
    pub rho: T,
    pub alpha: T,
    pub scaling: bool,
}

impl<T: Real> Default for SolverSettings<T> {
    fn default() -> Self {
        SolverSettings {
            eps_abs: T::of(1e-7),
            eps_rel: T::of(1e-7),
            max_iters: 200_000,
            rho: T::one(),
            alpha: T::of(1.6),
            scaling: true,
        }
    }
}

impl<T: Real> SolverSettings<T> {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.eps_abs > T::zero()) || !(self.eps_rel >= T::zero()) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if !(self.alpha > T::zero() && self.alpha < T::of(2.0)) {
            return Err(Error::InvalidArgument("alpha must lie in (0, 2)".into()));
        }
        if !(self.rho > T::zero()) {
            return Err(Error::InvalidArgument("rho must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        Ok(())
    }

    /// Same settings with both tolerances replaced.
    pub fn with_eps(mut self, eps: T) -> Self {
        self.eps_abs = eps;
        self.eps_rel = eps;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    /// No feasible point; `w` carries a Farkas-type certificate direction.
    PrimalInfeasible,
    /// Objective unbounded below; `z` carries an unbounded ray.
    DualInfeasible,
    IterLimit,
}

/// Unscaled KKT residuals: primal |Az + s - h|, dual |c + A'w|, and the
/// absolute duality gap |c'z + h'w|.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Residuals<T> {
    pub primal: T,
    pub dual: T,
    pub gap: T,
}

/// Solution bundle. `z` are the variables, `s` the cone slacks, `w` the
/// dual multipliers (one per row, living in the dual cone of its block).
#[derive(Debug, Clone, Serialize)]
pub struct ConicSolution<T> {
    pub status: SolveStatus,
    pub z: Vec<T>,
    pub s: Vec<T>,
    pub w: Vec<T>,
    /// c'z plus the program's objective offset. On PrimalInfeasible this is
    /// +inf, on DualInfeasible -inf.
    pub objective: T,
    pub residuals: Residuals<T>,
    pub iterations: usize,
}

/// Recomputes the three KKT residuals from the raw program data, sharing no
/// state with the solver's internal accounting.
pub fn kkt_residuals<T: Real>(prog: &ConicProgram<T>, sol: &ConicSolution<T>) -> Residuals<T> {
    let m = prog.h.len();
    let n = prog.num_vars;
    let mut az = vec![T::zero(); m];
    prog.a.matvec(&sol.z, &mut az);
    let prim: Vec<T> = (0..m).map(|r| az[r] + sol.s[r] - prog.h[r]).collect();
    let mut atw = vec![T::zero(); n];
    prog.a.tr_matvec(&sol.w, &mut atw);
    let dual: Vec<T> = (0..n).map(|j| prog.c[j] + atw[j]).collect();
    let gap = (dot(&prog.c, &sol.z) + dot(&prog.h, &sol.w)).abs();
    Residuals { primal: norm2(&prim), dual: norm2(&dual), gap }
}

/// Writes a human-readable listing of the program: one line per row with
/// its cone block and nonzero coefficients. Debug aid only.
pub fn dump_program<T: Real>(prog: &ConicProgram<T>, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(
        out,
        "conic program: {} vars, {} rows, {} cones, objective offset {}",
        prog.num_vars,
        prog.h.len(),
        prog.cones.len(),
        prog.obj_offset
    )?;
    let nz: Vec<String> = prog
        .c
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != T::zero())
        .map(|(j, v)| format!("z{j}: {v}"))
        .collect();
    writeln!(out, "objective: {}", nz.join(", "))?;
    let mut row = 0usize;
    for (ci, cone) in prog.cones.iter().enumerate() {
        writeln!(out, "cone {ci}: {cone:?}")?;
        for local in 0..cone.dim() {
            let coeffs: Vec<String> = (0..prog.num_vars)
                .filter(|&j| prog.a.at(row, j) != T::zero())
                .map(|j| format!("z{j}: {}", prog.a.at(row, j)))
                .collect();
            writeln!(out, "  row {row} (#{local}): h = {}, A = {{{}}}", prog.h[row], coeffs.join(", "))?;
            row += 1;
        }
    }
    Ok(())
}
