//! Completion of a strengthened-perspective point into the full binary
//! lift.
//!
//! Given (x, y, Y) feasible for the strengthened form, there is always a
//! matrix Z = [[Y, U], [U', V]] with U_ii = y_i and V_ii = x_i that is
//! feasible for the Shor form at the same objective value. This module
//! finds the completing off-diagonals by minimizing the shift lambda that
//! makes the bordered matrix positive semidefinite; the certificate of
//! the equivalence is lambda* <= 0 up to solver tolerance.

use serde::Serialize;

use crate::conic::{
    solve, svec_index, svec_pack, Cone, ConicSolution, SolveStatus, SolverSettings,
};
use crate::error::Error;
use crate::formulations::RowBuilder;
use crate::instance::QiInstance;
use crate::linalg::{sym_eigen, tri_len, Mat, SymMatrix};
use crate::real::Real;

/// Relative slack allowed on the input point before the result carries a
/// warning instead of a certificate.
const INPUT_TOL: f64 = 1e-6;

/// Feasibility report for a candidate Shor point (Z, x, y).
#[derive(Debug, Clone, Serialize)]
pub struct ShorFeasibility<T> {
    /// max_i |y_i - Z_{i, n+i}|.
    pub max_y_coupling: T,
    /// max_i |x_i - Z_{n+i, n+i}|.
    pub max_x_coupling: T,
    /// Smallest eigenvalue of the bordered matrix [[1, (y;x)'], [(y;x), Z]].
    pub min_eig_bordered: T,
    /// Z_ii Z_{n+i,n+i} - Z_{i,n+i}^2 for every coordinate.
    pub minors: Vec<T>,
    /// Worst violation of 0 <= x <= 1, y >= 0 and the y upper bounds.
    pub max_box_violation: T,
    /// Worst violation of the polyhedral side constraints.
    pub max_side_violation: T,
}

impl<T: Real> ShorFeasibility<T> {
    /// True when every residual is within `tol` (minors and the bordered
    /// eigenvalue may dip `tol` below zero).
    pub fn passes(&self, tol: T) -> bool {
        self.max_y_coupling <= tol
            && self.max_x_coupling <= tol
            && self.min_eig_bordered >= -tol
            && self.minors.iter().all(|&m| m >= -tol)
            && self.max_box_violation <= tol
            && self.max_side_violation <= tol
    }
}

/// Output of [`complete_to_shor`].
#[derive(Debug, Clone)]
pub struct CompletionResult<T> {
    /// The completed lift, y-block first: [[Y, U], [U', V]] with the input
    /// Y copied verbatim, U_ii = y_i and V_ii = x_i.
    pub z: SymMatrix<T>,
    /// Optimal shift; <= 0 (up to solver tolerance) certifies that the
    /// input point extends to a Shor-feasible matrix.
    pub lambda_star: T,
    pub status: SolveStatus,
    /// Worst violation of the strengthened-form constraints at the input
    /// point, in the same units as the data.
    pub input_violation: T,
    /// Whether the input passed the feasibility pre-check; when false the
    /// reported lambda_star is still the program's optimum but carries no
    /// certificate meaning.
    pub input_ok: bool,
    pub feasibility: ShorFeasibility<T>,
    pub iterations: usize,
}

/// Objective a'x + b'y + <Q, M> with one fixed summation order, so that
/// evaluating the strengthened form at Y and the Shor form at the
/// completed Z (whose y-block is Y bit for bit) gives identical floats.
pub fn lifted_objective<T: Real>(
    inst: &QiInstance<T>,
    x: &[T],
    y: &[T],
    mat: &SymMatrix<T>,
) -> T {
    let n = inst.n;
    let mut acc = T::zero();
    for i in 0..n {
        acc = acc + inst.a[i] * x[i];
    }
    for i in 0..n {
        acc = acc + inst.b[i] * y[i];
    }
    for i in 0..n {
        for j in 0..n {
            acc = acc + inst.q.entry(i, j) * mat.entry(i, j);
        }
    }
    acc
}

fn check_dims<T: Real>(
    inst: &QiInstance<T>,
    x: &[T],
    y: &[T],
    mat_dim: usize,
    expect: usize,
    what: &str,
) -> Result<(), Error> {
    let n = inst.n;
    if x.len() != n || y.len() != n || mat_dim != expect {
        return Err(Error::Shape(format!(
            "{what}: got x of length {}, y of length {}, matrix of side {mat_dim} for n = {n}",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

/// Worst violation of the strengthened-form constraints at (x, y, Y):
/// box and side rows, the minor inequalities Y_ii x_i >= y_i^2, and the
/// Schur condition Y - y y' >= 0.
fn input_violation<T: Real>(
    inst: &QiInstance<T>,
    x: &[T],
    y: &[T],
    ymat: &SymMatrix<T>,
) -> Result<T, Error> {
    let n = inst.n;
    let mut worst = T::zero();
    for i in 0..n {
        worst = worst.max(-x[i]).max(x[i] - T::one()).max(-y[i]);
        if let Some(u) = &inst.y_upper {
            worst = worst.max(y[i] - u[i]);
        }
        worst = worst.max(y[i] * y[i] - ymat.entry(i, i) * x[i]);
    }
    for sc in &inst.side_constraints {
        let mut lhs = -sc.rhs;
        for i in 0..n {
            lhs = lhs + sc.gx[i] * x[i] + sc.gy[i] * y[i];
        }
        worst = worst.max(lhs);
    }
    let bordered = SymMatrix::from_fn(n + 1, |i, j| match (i, j) {
        (0, 0) => T::one(),
        (0, j) => y[j - 1],
        (i, 0) => y[i - 1],
        (i, j) => ymat.entry(i - 1, j - 1),
    });
    let (vals, _) = sym_eigen(&bordered)?;
    if let Some(&lo) = vals.first() {
        worst = worst.max(-lo);
    }
    Ok(worst)
}

/// Completes a strengthened-form point into a full Shor matrix by solving
/// min lambda over the free off-diagonals of U and V subject to the
/// bordered (2n+1) matrix plus lambda I being positive semidefinite.
pub fn complete_to_shor<T: Real>(
    inst: &QiInstance<T>,
    x: &[T],
    y: &[T],
    ymat: &SymMatrix<T>,
    settings: &SolverSettings<T>,
) -> Result<CompletionResult<T>, Error> {
    let n = inst.n;
    check_dims(inst, x, y, ymat.dim(), n, "complete_to_shor")?;
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) || !ymat.is_finite() {
        return Err(Error::NonFinite("completion input"));
    }

    let violation = input_violation(inst, x, y, ymat)?;
    let input_ok = violation <= T::of(INPUT_TOL) * (T::one() + ymat.frobenius_norm());

    // Variables: lambda, then the n^2 - n free entries of U (row-major,
    // diagonal skipped), then the strict lower triangle of V column-major.
    let u_off = 1;
    let v_off = u_off + n * n - n;
    let num_vars = v_off + tri_len(n) - n;
    let side = 2 * n + 1;

    let mut bordered = SymMatrix::zeros(side);
    bordered.set(0, 0, T::one());
    for i in 0..n {
        bordered.set(1 + i, 0, y[i]);
        bordered.set(1 + n + i, 0, x[i]);
        bordered.set(1 + n + i, 1 + i, y[i]);
        bordered.set(1 + n + i, 1 + n + i, x[i]);
        for j in 0..n {
            bordered.set(1 + i, 1 + j, ymat.entry(i, j));
        }
    }
    let h = svec_pack(&bordered);

    let mut rb = RowBuilder::new(num_vars);
    let sqrt2 = T::of(2.0).sqrt();
    let mut var = u_off;
    let mut u_var = vec![vec![0usize; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                u_var[i][j] = var;
                var += 1;
            }
        }
    }
    let mut v_var = vec![vec![0usize; n]; n];
    for j in 0..n {
        for i in (j + 1)..n {
            v_var[i][j] = var;
            v_var[j][i] = var;
            var += 1;
        }
    }
    debug_assert_eq!(var, num_vars);

    // Rows follow the packing order of `h`. The member is
    // svec(bordered + lambda I + free entries), and s = h - A z, so every
    // variable contribution enters A negated.
    let mut idx = 0;
    for col in 0..side {
        for row in col..side {
            debug_assert_eq!(svec_index(side, row, col), idx);
            let mut coeffs: Vec<(usize, T)> = Vec::new();
            if row == col {
                coeffs.push((0, -T::one()));
            } else if col > n {
                let (i, j) = (row - 1 - n, col - 1 - n);
                coeffs.push((v_var[i][j], -sqrt2));
            } else if col >= 1 && row > n {
                let (i, j) = (col - 1, row - 1 - n);
                if i != j {
                    coeffs.push((u_var[i][j], -sqrt2));
                }
            }
            rb.row(&coeffs, h[idx]);
            idx += 1;
        }
    }
    rb.cone(Cone::PsdTriangle(side));

    let mut c = vec![T::zero(); num_vars];
    c[0] = T::one();
    let prog = rb.finish(c, T::zero());
    let sol: ConicSolution<T> = solve(&prog, settings)?;

    let lambda_star = sol.z[0];
    let mut z = SymMatrix::zeros(2 * n);
    for i in 0..n {
        for j in i..n {
            z.set(i, j, ymat.entry(i, j));
        }
        z.set(i, n + i, y[i]);
        z.set(n + i, n + i, x[i]);
        for j in 0..n {
            if i != j {
                z.set(i, n + j, sol.z[u_var[i][j]]);
            }
            if i < j {
                z.set(n + i, n + j, sol.z[v_var[i][j]]);
            }
        }
    }

    let feasibility = verify_shor_feasible(inst, &z, x, y)?;
    Ok(CompletionResult {
        z,
        lambda_star,
        status: sol.status,
        input_violation: violation,
        input_ok,
        feasibility,
        iterations: sol.iterations,
    })
}

/// Measures how far (Z, x, y) is from satisfying the Shor constraints:
/// coupling rows, the bordered semidefinite condition, the per-coordinate
/// 2x2 minors, and the box/side rows.
pub fn verify_shor_feasible<T: Real>(
    inst: &QiInstance<T>,
    z: &SymMatrix<T>,
    x: &[T],
    y: &[T],
) -> Result<ShorFeasibility<T>, Error> {
    let n = inst.n;
    check_dims(inst, x, y, z.dim(), 2 * n, "verify_shor_feasible")?;

    let mut max_y_coupling = T::zero();
    let mut max_x_coupling = T::zero();
    let mut minors = Vec::with_capacity(n);
    for i in 0..n {
        max_y_coupling = max_y_coupling.max((y[i] - z.entry(i, n + i)).abs());
        max_x_coupling = max_x_coupling.max((x[i] - z.entry(n + i, n + i)).abs());
        minors.push(
            z.entry(i, i) * z.entry(n + i, n + i) - z.entry(i, n + i) * z.entry(i, n + i),
        );
    }

    let bordered = SymMatrix::from_fn(2 * n + 1, |i, j| match (i, j) {
        (0, 0) => T::one(),
        (0, j) if j <= n => y[j - 1],
        (0, j) => x[j - 1 - n],
        (i, 0) if i <= n => y[i - 1],
        (i, 0) => x[i - 1 - n],
        (i, j) => z.entry(i - 1, j - 1),
    });
    let (vals, _mat): (Vec<T>, Mat<T>) = sym_eigen(&bordered)?;
    let min_eig_bordered = vals.first().copied().unwrap_or_else(T::zero);

    let mut max_box_violation = T::zero();
    for i in 0..n {
        max_box_violation = max_box_violation.max(-x[i]).max(x[i] - T::one()).max(-y[i]);
        if let Some(u) = &inst.y_upper {
            max_box_violation = max_box_violation.max(y[i] - u[i]);
        }
    }
    let mut max_side_violation = T::zero();
    for sc in &inst.side_constraints {
        let mut lhs = -sc.rhs;
        for i in 0..n {
            lhs = lhs + sc.gx[i] * x[i] + sc.gy[i] * y[i];
        }
        max_side_violation = max_side_violation.max(lhs);
    }

    Ok(ShorFeasibility {
        max_y_coupling,
        max_x_coupling,
        min_eig_bordered,
        minors,
        max_box_violation,
        max_side_violation,
    })
}
