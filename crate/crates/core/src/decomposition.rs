//! Diagonal decompositions `Q = diag(d) + R` with `R` positive
//! semidefinite. The best such diagonal is not searched for directly: it
//! falls out of the matrix-lifted relaxation as the dual multipliers of
//! the per-coordinate rotated cones, one eigendecomposition away from a
//! certificate. A bisection repair covers the case where solver noise
//! pushes the extracted diagonal slightly outside the feasible set.

use serde::Serialize;

use crate::error::Error;
use crate::formulations::{RelaxationKind, RelaxationResult};
use crate::instance::QiInstance;
use crate::linalg::{min_eigenvalue, SymMatrix};
use crate::real::Real;

/// Dual multipliers below this are treated as solver noise and clamped.
const DUAL_NOISE: f64 = 1e-9;

/// A diagonal is accepted when the residual's smallest eigenvalue clears
/// `-RESIDUAL_TOL * (1 + max |Q_ij|)`.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Target floor for the repaired residual, slightly tighter than the
/// acceptance threshold so a repaired diagonal always validates.
const REPAIR_FLOOR: f64 = 1e-9;

/// Bisection width on the repair scaling.
const REPAIR_RES: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagonalSource {
    DualExtraction,
    Repaired,
    UserSupplied,
}

/// A nonnegative diagonal `d` with (certified) positive semidefinite
/// residual `Q - diag(d)`.
#[derive(Debug, Clone, Serialize)]
pub struct DiagonalDecomposition<T> {
    pub d: Vec<T>,
    /// Smallest eigenvalue of `Q - diag(d)`, recomputed at construction.
    pub min_residual_eig: T,
    pub source: DiagonalSource,
}

impl<T: Real> DiagonalDecomposition<T> {
    /// Wraps a caller-provided diagonal, computing its certificate. The
    /// diagonal is not repaired; use [`repair_decomposition`] for that.
    pub fn user_supplied(q: &SymMatrix<T>, d: Vec<T>) -> Result<Self, Error> {
        let (min_residual_eig, min_d) = validate_decomposition(q, &d)?;
        if min_d < T::zero() {
            return Err(Error::InvalidArgument(format!(
                "diagonal has negative entry {min_d}"
            )));
        }
        Ok(DiagonalDecomposition { d, min_residual_eig, source: DiagonalSource::UserSupplied })
    }

    /// Whether the residual certificate clears the acceptance threshold
    /// for the given quadratic's scale.
    pub fn is_feasible(&self, q: &SymMatrix<T>) -> bool {
        let scale = T::one() + q.max_abs();
        self.min_residual_eig >= -T::of(RESIDUAL_TOL) * scale
    }
}

/// Reads the optimal diagonal out of a solved matrix-lifted relaxation:
/// coordinate `i` of the diagonal is the multiplier on the `Y_ii` slot of
/// the `i`-th rotated cone `y_i^2 <= Y_ii x_i`. Negative noise is clamped
/// to zero, which can only grow the residual and so keeps feasibility.
pub fn extract_optimal_diagonal<T: Real>(
    inst: &QiInstance<T>,
    opt: &RelaxationResult<T>,
) -> Result<DiagonalDecomposition<T>, Error> {
    if opt.kind != RelaxationKind::OptPersp {
        return Err(Error::InvalidArgument(format!(
            "diagonal extraction needs the optpersp relaxation, got {}",
            opt.kind
        )));
    }
    if opt.status != crate::conic::SolveStatus::Optimal {
        return Err(Error::NotOptimal(opt.status));
    }
    let duals = opt
        .rotated_cone_duals
        .as_ref()
        .ok_or(Error::MissingDuals("rotated-cone duals absent from relaxation result"))?;
    if duals.len() != inst.n {
        return Err(Error::Shape(format!(
            "expected {} dual triples, got {}",
            inst.n,
            duals.len()
        )));
    }
    let noise = T::of(DUAL_NOISE);
    let mut d = Vec::with_capacity(inst.n);
    for (i, triple) in duals.iter().enumerate() {
        let u = triple[0];
        if !u.is_finite() {
            return Err(Error::NonFinite("rotated-cone dual"));
        }
        if u < -noise * (T::one() + inst.psd_scale()) {
            return Err(Error::Numeric(format!(
                "dual multiplier {i} is {u}, far below zero; dual extraction unreliable"
            )));
        }
        d.push(u.max(T::zero()));
    }
    let (min_residual_eig, _) = validate_decomposition(&inst.q, &d)?;
    Ok(DiagonalDecomposition { d, min_residual_eig, source: DiagonalSource::DualExtraction })
}

/// Recomputes the two certificate quantities of a decomposition from
/// scratch: the smallest eigenvalue of `Q - diag(d)` and the smallest
/// entry of `d`.
pub fn validate_decomposition<T: Real>(
    q: &SymMatrix<T>,
    d: &[T],
) -> Result<(T, T), Error> {
    if d.len() != q.dim() {
        return Err(Error::Shape(format!(
            "diagonal has length {}, matrix has side {}",
            d.len(),
            q.dim()
        )));
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("diagonal"));
    }
    let min_eig = min_eigenvalue(&q.minus_diag(d))?;
    let min_d = d.iter().fold(T::infinity(), |acc, &v| acc.min(v));
    Ok((min_eig, min_d))
}

/// Scales a raw diagonal back into the feasible set: returns `theta * d`
/// for the largest `theta` in `[0, 1]` (bisection to 1e-10) keeping the
/// residual's smallest eigenvalue above `-1e-9 * (1 + max |Q_ij|)`. The
/// map `theta -> min eig(Q - theta diag(d))` is concave and decreasing
/// for `d >= 0`, so bisection on the sign is sound. `theta = 0` always
/// works because `Q` itself is positive semidefinite.
pub fn repair_decomposition<T: Real>(
    q: &SymMatrix<T>,
    d_raw: &[T],
) -> Result<DiagonalDecomposition<T>, Error> {
    if d_raw.len() != q.dim() {
        return Err(Error::Shape(format!(
            "diagonal has length {}, matrix has side {}",
            d_raw.len(),
            q.dim()
        )));
    }
    if d_raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("diagonal"));
    }
    let d_raw: Vec<T> = d_raw.iter().map(|&v| v.max(T::zero())).collect();
    let scale = T::one() + q.max_abs();
    let floor = -T::of(REPAIR_FLOOR) * scale;
    let eig_at = |theta: T| -> Result<T, Error> {
        let scaled: Vec<T> = d_raw.iter().map(|&v| theta * v).collect();
        min_eigenvalue(&q.minus_diag(&scaled))
    };

    let full = eig_at(T::one())?;
    if full >= floor {
        return Ok(DiagonalDecomposition {
            d: d_raw,
            min_residual_eig: full,
            source: DiagonalSource::UserSupplied,
        });
    }
    let mut lo = T::zero();
    let mut hi = T::one();
    let res = T::of(REPAIR_RES);
    while hi - lo > res {
        let mid = (lo + hi) / T::of(2.0);
        if eig_at(mid)? >= floor {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let d: Vec<T> = d_raw.iter().map(|&v| lo * v).collect();
    let min_residual_eig = eig_at(lo)?;
    Ok(DiagonalDecomposition { d, min_residual_eig, source: DiagonalSource::Repaired })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::SolverSettings;
    use crate::formulations::{relax, Relaxation};
    use crate::instance::QiInstance;

    fn settings() -> SolverSettings<f64> {
        SolverSettings::default()
    }

    #[test]
    fn extraction_on_one_coordinate_gives_a_valid_optimal_diagonal() {
        let inst = QiInstance::new(
            vec![3.0],
            vec![-4.0],
            SymMatrix::from_rows(&[vec![1.0]]).unwrap(),
        );
        let opt = relax(&inst, &Relaxation::OptPersp, &settings()).unwrap();
        let opt_bound = opt.bound.finite().unwrap();
        let dec = extract_optimal_diagonal(&inst, &opt).unwrap();
        assert_eq!(dec.source, DiagonalSource::DualExtraction);
        // The optimal dual set here is the interval [3/4, 1].
        assert!(dec.d[0] > 0.74 && dec.d[0] < 1.01, "d = {:?}", dec.d);
        assert!(dec.is_feasible(&inst.q), "residual eig {}", dec.min_residual_eig);
        // The decisive property: the extracted diagonal reproduces the
        // lifted bound through the plain perspective relaxation.
        let persp = relax(&inst, &Relaxation::Perspective(dec.d.clone()), &settings()).unwrap();
        let pv = persp.bound.finite().unwrap();
        assert!(
            (pv - opt_bound).abs() <= 1e-4 * (1.0 + opt_bound.abs()),
            "persp(d*) {pv} vs optpersp {opt_bound}"
        );
    }

    #[test]
    fn all_ones_matrix_admits_only_the_zero_diagonal() {
        // For Q = [[1,1],[1,1]], any d with d_1 > 0 forces
        // det(Q - diag(d)) < 0, so the only decomposition is d = 0.
        let inst = QiInstance {
            n: 2,
            a: vec![1.0, 1.0],
            b: vec![-3.0, -3.0],
            q: SymMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap(),
            side_constraints: vec![],
            y_upper: Some(vec![10.0, 10.0]),
        };
        let opt = relax(&inst, &Relaxation::OptPersp, &settings()).unwrap();
        let dec = extract_optimal_diagonal(&inst, &opt).unwrap();
        assert!(dec.d[0] < 1e-4 && dec.d[1] < 1e-4, "d = {:?}", dec.d);
    }

    #[test]
    fn validation_recomputes_both_certificates() {
        let q = SymMatrix::<f64>::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let (eig, min_d) = validate_decomposition(&q, &[1.0, 1.0]).unwrap();
        assert!(eig.abs() < 1e-12, "residual [[1,1],[1,1]] has min eig 0, got {eig}");
        assert_eq!(min_d, 1.0);

        let q = SymMatrix::<f64>::from_diag(&[1.0, 1.0]);
        let (eig, _) = validate_decomposition(&q, &[2.0, 2.0]).unwrap();
        assert!((eig + 1.0).abs() < 1e-12, "expected -1, got {eig}");

        let (eig, min_d) = validate_decomposition(&q, &[0.0, 0.0]).unwrap();
        assert!(eig >= -1e-12);
        assert_eq!(min_d, 0.0);
    }

    #[test]
    fn repair_scales_back_to_the_boundary() {
        let q = SymMatrix::<f64>::from_diag(&[1.0, 1.0]);
        let dec = repair_decomposition(&q, &[2.0, 2.0]).unwrap();
        assert_eq!(dec.source, DiagonalSource::Repaired);
        assert!((dec.d[0] - 1.0).abs() < 1e-8, "theta should land at 1/2, d = {:?}", dec.d);
        assert!((dec.d[1] - 1.0).abs() < 1e-8);
        assert!(dec.is_feasible(&q));
    }

    #[test]
    fn repair_leaves_feasible_diagonals_alone() {
        let q = SymMatrix::<f64>::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let dec = repair_decomposition(&q, &[1.0, 0.5]).unwrap();
        assert_eq!(dec.source, DiagonalSource::UserSupplied);
        assert_eq!(dec.d, vec![1.0, 0.5]);
    }

    #[test]
    fn repair_of_zero_is_zero() {
        let q = SymMatrix::<f64>::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let dec = repair_decomposition(&q, &[0.0, 0.0]).unwrap();
        assert_eq!(dec.d, vec![0.0, 0.0]);
    }

    #[test]
    fn extraction_rejects_wrong_kind() {
        let inst = QiInstance::new(
            vec![3.0],
            vec![-4.0],
            SymMatrix::from_rows(&[vec![1.0]]).unwrap(),
        );
        let naive = relax(&inst, &Relaxation::Naive, &settings()).unwrap();
        assert!(extract_optimal_diagonal(&inst, &naive).is_err());
    }

    #[test]
    fn increasing_a_feasible_diagonal_never_weakens_the_bound() {
        // Monotonicity spot check: d' >= d (both feasible) implies
        // bound(persp(d')) >= bound(persp(d)) - tolerance.
        let inst = QiInstance {
            n: 2,
            a: vec![1.0, 1.0],
            b: vec![-3.0, -3.0],
            q: SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap(),
            side_constraints: vec![],
            y_upper: None,
        };
        let lo = relax(&inst, &Relaxation::Perspective(vec![0.5, 0.5]), &settings()).unwrap();
        let hi = relax(&inst, &Relaxation::Perspective(vec![1.0, 1.0]), &settings()).unwrap();
        let lv = lo.bound.finite().unwrap();
        let hv = hi.bound.finite().unwrap();
        assert!(hv >= lv - 1e-5, "persp(0.5) {lv} vs persp(1.0) {hv}");
    }
}
