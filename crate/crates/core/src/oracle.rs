//! Exhaustive ground truth: one convex subproblem per indicator pattern,
//! no pruning, no shortcuts. Every other solver in the crate is tested
//! against this one, so the subproblems are built here from the instance
//! directly rather than through the relaxation builders.

use serde::Serialize;

use crate::conic::{solve, Cone, ConicProgram, ConicSolution, SolveStatus, SolverSettings};
use crate::error::Error;
use crate::instance::{Pattern, QiInstance};
use crate::linalg::{sym_eigen, Mat, SymMatrix};
use crate::real::Real;
use crate::value::ExtReal;

/// Enumeration cap: 2^16 conic solves is the most the oracle will accept.
pub const DEFAULT_PATTERN_LIMIT: usize = 16;

/// Ties within this margin keep the lexicographically earlier pattern.
const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
#[serde(bound = "T: Real + Serialize")]
pub struct OracleResult<T> {
    /// Minimum over all patterns; +inf when every pattern is infeasible.
    pub optimal_value: ExtReal<T>,
    pub best_pattern: Pattern,
    /// Minimizer at the best pattern, with y_i = 0 exactly where the
    /// pattern bit is off.
    pub best_y: Vec<T>,
    /// Every pattern with its value and solve status, in lexicographic
    /// order.
    pub per_pattern: Vec<(Pattern, ExtReal<T>, SolveStatus)>,
}

/// Solves the indicator problem by enumerating all 2^n patterns with the
/// default cap of [`DEFAULT_PATTERN_LIMIT`] on n.
pub fn brute_force<T: Real>(
    inst: &QiInstance<T>,
    settings: &SolverSettings<T>,
) -> Result<OracleResult<T>, Error> {
    brute_force_limited(inst, settings, DEFAULT_PATTERN_LIMIT)
}

/// [`brute_force`] with an explicit cap on n.
pub fn brute_force_limited<T: Real>(
    inst: &QiInstance<T>,
    settings: &SolverSettings<T>,
    limit_n: usize,
) -> Result<OracleResult<T>, Error> {
    let n = inst.n;
    if n > limit_n {
        return Err(Error::InvalidArgument(format!(
            "brute force enumerates 2^{n} patterns, above the cap of 2^{limit_n}"
        )));
    }

    let mut per_pattern = Vec::with_capacity(1usize << n);
    let mut best: Option<(usize, ExtReal<T>, Vec<T>)> = None;
    for k in 0..(1u64 << n) {
        let pattern = Pattern::from_lex_index(n, k);
        let support: Vec<usize> = (0..n).filter(|&i| pattern.get(i)).collect();
        let (value, status, y) = if support.is_empty() {
            // Everything off: y = 0 exactly, so only the side constraints
            // can reject the pattern and the objective is zero.
            let feasible = inst.side_constraints.iter().all(|sc| sc.rhs >= T::zero());
            if feasible {
                (ExtReal::Finite(T::zero()), SolveStatus::Optimal, vec![T::zero(); n])
            } else {
                (ExtReal::PosInf, SolveStatus::PrimalInfeasible, vec![T::zero(); n])
            }
        } else {
            let prog = pattern_program(inst, &support)?;
            let sol = solve_subproblem(&prog, settings, &pattern)?;
            let value = match sol.status {
                SolveStatus::PrimalInfeasible => ExtReal::PosInf,
                SolveStatus::DualInfeasible => ExtReal::NegInf,
                SolveStatus::Optimal => ExtReal::Finite(sol.objective),
                SolveStatus::IterLimit => unreachable!("solve_subproblem filters IterLimit"),
            };
            let mut y = vec![T::zero(); n];
            for (pos, &i) in support.iter().enumerate() {
                y[i] = sol.z[pos];
            }
            (value, sol.status, y)
        };
        let improves = match &best {
            None => true,
            Some((_, incumbent, _)) => match (&value, incumbent) {
                (ExtReal::Finite(v), ExtReal::Finite(b)) => *v < *b - T::of(TIE_TOL),
                _ => value < *incumbent,
            },
        };
        if improves {
            best = Some((per_pattern.len(), value, y));
        }
        per_pattern.push((pattern, value, status));
    }

    let (best_idx, optimal_value, best_y) =
        best.expect("at least the all-zeros pattern is enumerated");
    Ok(OracleResult {
        optimal_value,
        best_pattern: per_pattern[best_idx].0.clone(),
        best_y,
        per_pattern,
    })
}

/// Conic form of the convex subproblem at one fully fixed pattern, built
/// from the instance directly: x is substituted, y is restricted to the
/// on-coordinates `support`, and the quadratic becomes the epigraph of
/// `y' Q_SS y` through its eigenfactorization (at binary x a perspective
/// split would contribute exactly the same value, so none is consulted).
fn pattern_program<T: Real>(
    inst: &QiInstance<T>,
    support: &[usize],
) -> Result<ConicProgram<T>, Error> {
    let k = support.len();
    let one = T::one();
    let qss = SymMatrix::from_fn(k, |p, q| inst.q.entry(support[p], support[q]));
    let (eigs, vecs) = sym_eigen(&qss)?;
    let floor = T::of(1e-10) * (one + qss.max_abs());
    let kept: Vec<usize> = (0..k).filter(|&p| eigs[p] > floor).collect();
    let rank = kept.len();
    let num_vars = k + usize::from(rank > 0);

    let num_side = inst.side_constraints.len();
    let upper_rows = if inst.y_upper.is_some() { k } else { 0 };
    let m = k + upper_rows + num_side + if rank > 0 { 2 + rank } else { 0 };
    let mut a = Mat::zeros(m, num_vars);
    let mut h = vec![T::zero(); m];
    let mut cones = Vec::new();
    let mut r = 0;

    for pos in 0..k {
        a.set(r, pos, -one); // slack y_i >= 0
        r += 1;
    }
    cones.push(Cone::NonNeg(k));
    if let Some(u) = &inst.y_upper {
        for (pos, &i) in support.iter().enumerate() {
            a.set(r, pos, one);
            h[r] = u[i]; // slack u_i - y_i >= 0
            r += 1;
        }
        cones.push(Cone::NonNeg(k));
    }
    for sc in &inst.side_constraints {
        let fixed = support.iter().fold(T::zero(), |acc, &i| acc + sc.gx[i]);
        for (pos, &i) in support.iter().enumerate() {
            a.set(r, pos, sc.gy[i]);
        }
        h[r] = sc.rhs - fixed; // slack rhs - gx'x - gy'y >= 0
        r += 1;
    }
    if num_side > 0 {
        cones.push(Cone::NonNeg(num_side));
    }
    if rank > 0 {
        a.set(r, k, -one); // epigraph head
        r += 1;
        h[r] = T::of(0.5); // fixed second head: 2 r (1/2) >= ||L'y||^2
        r += 1;
        for &p in &kept {
            let w = eigs[p].sqrt();
            for j in 0..k {
                a.set(r, j, -(vecs.at(j, p) * w));
            }
            r += 1;
        }
        cones.push(Cone::RotatedQuad(2 + rank));
    }
    debug_assert_eq!(r, m);

    let mut c = vec![T::zero(); num_vars];
    for (pos, &i) in support.iter().enumerate() {
        c[pos] = inst.b[i];
    }
    if rank > 0 {
        c[k] = one;
    }
    let obj_offset = support.iter().fold(T::zero(), |acc, &i| acc + inst.a[i]);
    Ok(ConicProgram { num_vars, c, a, h, cones, obj_offset })
}

/// Solves one pattern subproblem, refusing to hand back an unconverged value.
/// An iteration-capped objective is not a bound in either direction, so a
/// pattern that stalls gets retried with flipped equilibration and a larger
/// budget; a pattern that stalls every time is a hard error rather than a
/// silently wrong ground truth.
fn solve_subproblem<T: Real>(
    prog: &ConicProgram<T>,
    settings: &SolverSettings<T>,
    pattern: &Pattern,
) -> Result<ConicSolution<T>, Error> {
    let first = solve(prog, settings)?;
    if first.status != SolveStatus::IterLimit {
        return Ok(first);
    }
    let retries = [
        (settings.max_iters, !settings.scaling),
        (settings.max_iters.saturating_mul(5), settings.scaling),
        (settings.max_iters.saturating_mul(5), !settings.scaling),
        (settings.max_iters.saturating_mul(25), settings.scaling),
        (settings.max_iters.saturating_mul(25), !settings.scaling),
    ];
    for (max_iters, scaling) in retries {
        let relaxed = SolverSettings { max_iters, scaling, ..settings.clone() };
        let sol = solve(prog, &relaxed)?;
        if sol.status != SolveStatus::IterLimit {
            return Ok(sol);
        }
    }
    Err(Error::Numeric(format!(
        "pattern {pattern} hit the iteration limit on every retry; \
         its subproblem value is unknown"
    )))
}
