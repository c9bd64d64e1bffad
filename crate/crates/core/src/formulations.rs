//! Conic formulations of the indicator problem and its convex relaxations.
//!
//! Every builder here targets the same standard form `min c'z` subject to
//! `Az + s = h`, `s in K`. Four relaxations are exposed:
//!
//! * **naive**: indicators relaxed to `[0, 1]`, complementarity dropped,
//!   the quadratic kept through a single epigraph cone.
//! * **perspective**: a diagonal `d` with `Q - diag(d)` positive
//!   semidefinite splits the quadratic; each extracted term `d_i y_i^2`
//!   is strengthened to its perspective `d_i y_i^2 / x_i` via a rotated
//!   cone `(t_i, x_i, sqrt2 y_i)`, the residual stays an epigraph.
//! * **optpersp**: the perspective strengthening applied to a full matrix
//!   lift `Y ~ y y'`, which optimizes over all valid diagonals at once.
//! * **shor**: the plain semidefinite lift of the binary quadratic model,
//!   with complementarity encoded linearly in the lifted matrix.
//!
//! A fifth builder pins a subset of indicators to fixed binary values; the
//! exhaustive oracle and the branch-and-bound nodes are built on it.
//!
//! Row blocks are emitted in a fixed documented order: equality pins,
//! then bound rows (`x >= 0`, `1 - x >= 0`, `y >= 0`, upper bounds, side
//! constraints), then rotated cones ascending in `i`, then the residual
//! epigraph cone or the semidefinite block. Extraction relies only on the
//! recorded [`Layout`], never on recomputing offsets.

use serde::Serialize;

use crate::conic::cones::{svec_index, svec_pack, svec_unpack, Cone};
use crate::conic::{solve, ConicProgram, ConicSolution, Residuals, SolveStatus, SolverSettings};
use crate::error::Error;
use crate::instance::QiInstance;
use crate::linalg::{sym_eigen, tri_len, Mat, SymMatrix};
use crate::real::Real;
use crate::value::ExtReal;

/// Diagonal entries at or below this relative threshold get no perspective
/// cone. The cone `(t_i, x_i, sqrt2 y_i)` forces `y_i = 0` whenever
/// `x_i = 0`, which is a strengthening only justified when the objective
/// actually carries curvature `d_i > 0` on that coordinate.
const DIAG_EPS: f64 = 1e-11;

/// Diagonal entries below this times the instance scale are folded back
/// into the residual quadratic instead of getting a perspective cone.
/// Matches the PSD acceptance noise floor, so a repaired diagonal that is
/// numerically zero builds the same program as an exact zero.
const DIAG_DUST: f64 = 1e-8;

/// Residual eigenvalues below `-RESID_NEG_TOL * scale` mean `Q - diag(d)`
/// is not positive semidefinite and the diagonal is rejected; eigenvalues
/// under `RESID_DROP_TOL * scale` contribute no factor column.
const RESID_NEG_TOL: f64 = 1e-8;
const RESID_DROP_TOL: f64 = 1e-10;

/// Eigenvalues of `Q` at or below this relative threshold count as zero
/// when deciding whether the matrix lift must be quotiented.
const NULL_EIG_TOL: f64 = 1e-10;
/// A coordinate keeps its rotated cone (or its lifted coupling) in the
/// quotient only when the null space of `Q` is essentially absent from it.
const ANCHOR_TOL: f64 = 1e-9;
/// Relative size of the null-space inflation added to reported matrices.
/// Reported `x` entries get lifted by at most about `2 / INFLATE` to keep
/// the representative point minor-feasible.
const INFLATE: f64 = 1e6;

/// Relaxation selector carrying the perspective diagonal when one is used.
#[derive(Debug, Clone)]
pub enum Relaxation<T> {
    Naive,
    Perspective(Vec<T>),
    OptPersp,
    Shor,
}

impl<T> Relaxation<T> {
    pub fn kind(&self) -> RelaxationKind {
        match self {
            Relaxation::Naive => RelaxationKind::Naive,
            Relaxation::Perspective(_) => RelaxationKind::Perspective,
            Relaxation::OptPersp => RelaxationKind::OptPersp,
            Relaxation::Shor => RelaxationKind::Shor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RelaxationKind {
    #[serde(rename = "naive")]
    Naive,
    #[serde(rename = "persp")]
    Perspective,
    #[serde(rename = "optpersp")]
    OptPersp,
    #[serde(rename = "shor")]
    Shor,
}

impl std::fmt::Display for RelaxationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RelaxationKind::Naive => "naive",
            RelaxationKind::Perspective => "persp",
            RelaxationKind::OptPersp => "optpersp",
            RelaxationKind::Shor => "shor",
        };
        write!(f, "{s}")
    }
}

/// Facial reduction data for the matrix-lifted forms on a rank-deficient
/// `Q`. Growing the lift along a positive semidefinite direction supported
/// on null(Q) costs nothing and only relaxes constraints, so the infimum
/// is approached as those entries diverge and no finite optimum exists.
/// Quotienting the lift by the null space restores attainment: the reduced
/// program optimizes the compression `W = B' Y B` onto range(Q), and only
/// coordinates the null space cannot reach keep their couplings.
#[derive(Debug, Clone)]
pub(crate) struct Reduction<T> {
    /// Orthonormal basis of range(Q), one column per positive eigenvalue.
    basis: Mat<T>,
    /// The positive eigenvalues, aligned with the basis columns.
    eigs: Vec<T>,
    /// Projector onto null(Q): `N = I - B B'`.
    null_proj: SymMatrix<T>,
    /// `anchored[i]` iff `e_i` lies in range(Q), i.e. `N_ii` is negligible.
    anchored: Vec<bool>,
}

/// Detects a numerically rank-deficient `Q` and prepares the quotient.
/// Indefinite data is left alone (`None`): the plain lift then exposes the
/// unboundedness through the solver, matching the unreduced behavior.
fn reduce_lift<T: Real>(q: &SymMatrix<T>, scale: T) -> Result<Option<Reduction<T>>, Error> {
    let n = q.dim();
    let (vals, vecs) = sym_eigen(q)?;
    if vals.first().is_some_and(|&lo| lo < -T::of(RESID_NEG_TOL) * scale) {
        return Ok(None);
    }
    let zero_tol = T::of(NULL_EIG_TOL) * scale;
    let kept: Vec<usize> = (0..n).filter(|&k| vals[k] > zero_tol).collect();
    if kept.len() == n {
        return Ok(None);
    }
    let r = kept.len();
    let mut basis = Mat::zeros(n, r);
    let mut eigs = Vec::with_capacity(r);
    for (col, &k) in kept.iter().enumerate() {
        eigs.push(vals[k]);
        for i in 0..n {
            basis.set(i, col, vecs.at(i, k));
        }
    }
    let null_proj = SymMatrix::from_fn(n, |i, j| {
        let mut acc = if i == j { T::one() } else { T::zero() };
        for p in 0..r {
            acc = acc - basis.at(i, p) * basis.at(j, p);
        }
        acc
    });
    let anchor_tol = T::of(ANCHOR_TOL);
    let anchored = (0..n).map(|i| null_proj.entry(i, i) <= anchor_tol).collect();
    Ok(Some(Reduction { basis, eigs, null_proj, anchored }))
}

/// Where each semantic piece of a built program lives. `x` always occupies
/// variables `0..n` and `y` occupies `n..2n`.
#[derive(Debug, Clone)]
pub(crate) struct Layout<T> {
    pub n: usize,
    /// Epigraph variable of the extracted term `d_i y_i^2 / x_i`, when the
    /// cone for coordinate `i` was emitted.
    pub t_var: Vec<Option<usize>>,
    /// Epigraph variable of the residual quadratic, when the residual has
    /// positive rank.
    pub r_var: Option<usize>,
    /// First variable of the packed matrix block, if the form has one.
    pub mat_off: Option<usize>,
    /// Side of the packed matrix block: `n` for the perspective lift and
    /// `2n` for the full binary lift, shrunk by the rank deficiency of `Q`
    /// when the lift was quotiented.
    pub mat_dim: usize,
    /// Start row of the rotated-cone triple for coordinate `i`.
    pub rq3_row: Vec<Option<usize>>,
    /// Present when the matrix lift was quotiented by null(Q).
    pub reduction: Option<Reduction<T>>,
}

impl<T> Layout<T> {
    fn new(n: usize) -> Self {
        Layout {
            n,
            t_var: vec![None; n],
            r_var: None,
            mat_off: None,
            mat_dim: 0,
            rq3_row: vec![None; n],
            reduction: None,
        }
    }
}

/// A standard-form program plus the layout needed to read answers back out.
pub(crate) struct Built<T> {
    pub prog: ConicProgram<T>,
    pub layout: Layout<T>,
}

/// Incremental row-major assembly of `(A, h, cones)`.
pub(crate) struct RowBuilder<T> {
    num_vars: usize,
    entries: Vec<Vec<(usize, T)>>,
    h: Vec<T>,
    cones: Vec<Cone>,
}

impl<T: Real> RowBuilder<T> {
    pub(crate) fn new(num_vars: usize) -> Self {
        RowBuilder { num_vars, entries: Vec::new(), h: Vec::new(), cones: Vec::new() }
    }

    pub(crate) fn rows(&self) -> usize {
        self.h.len()
    }

    /// Appends one row of `A` and `h`. Cones are attached separately and
    /// must tile the rows exactly; `finish` checks the accounting.
    pub(crate) fn row(&mut self, coeffs: &[(usize, T)], rhs: T) {
        debug_assert!(coeffs.iter().all(|&(j, _)| j < self.num_vars));
        self.entries.push(coeffs.to_vec());
        self.h.push(rhs);
    }

    pub(crate) fn cone(&mut self, cone: Cone) {
        self.cones.push(cone);
    }

    pub(crate) fn finish(self, c: Vec<T>, obj_offset: T) -> ConicProgram<T> {
        let m = self.h.len();
        debug_assert_eq!(m, self.cones.iter().map(|c| c.dim()).sum::<usize>());
        let mut a = Mat::zeros(m, self.num_vars);
        for (r, row) in self.entries.iter().enumerate() {
            for &(j, v) in row {
                a.add_at(r, j, v);
            }
        }
        ConicProgram { num_vars: self.num_vars, c, a, h: self.h, cones: self.cones, obj_offset }
    }
}

/// Factorizes the residual `R = Q - diag(d)` as `L L'` through its
/// eigendecomposition. Returns `None` when the residual is numerically
/// zero, the factor otherwise; rejects diagonals that leave `R` indefinite
/// beyond tolerance.
fn factor_residual<T: Real>(r: &SymMatrix<T>, scale: T) -> Result<Option<Mat<T>>, Error> {
    let n = r.dim();
    let (vals, vecs) = sym_eigen(r)?;
    let neg_tol = T::of(RESID_NEG_TOL) * scale;
    if let Some(&lo) = vals.first() {
        if lo < -neg_tol {
            return Err(Error::InfeasibleDiagonal {
                min_eig: lo.as_f64(),
                tol: neg_tol.as_f64(),
            });
        }
    }
    let drop_tol = T::of(RESID_DROP_TOL) * scale;
    let kept: Vec<usize> = (0..n).filter(|&k| vals[k] > drop_tol).collect();
    if kept.is_empty() {
        return Ok(None);
    }
    let mut l = Mat::zeros(n, kept.len());
    for (col, &k) in kept.iter().enumerate() {
        let s = vals[k].sqrt();
        for i in 0..n {
            l.set(i, col, s * vecs.at(i, k));
        }
    }
    Ok(Some(l))
}

fn check_diag<T: Real>(inst: &QiInstance<T>, d: &[T]) -> Result<(), Error> {
    if d.len() != inst.n {
        return Err(Error::Shape(format!(
            "diagonal has length {}, instance has n = {}",
            d.len(),
            inst.n
        )));
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("perspective diagonal"));
    }
    if let Some(neg) = d.iter().find(|&&v| v < T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "perspective diagonal must be nonnegative, got {neg}"
        )));
    }
    Ok(())
}

/// Emits the shared bound rows: `x >= 0`, `1 - x >= 0`, `y >= 0`, optional
/// upper bounds on `y`, then the polyhedral side constraints.
fn push_bound_rows<T: Real>(rb: &mut RowBuilder<T>, inst: &QiInstance<T>) {
    let n = inst.n;
    let one = T::one();
    for i in 0..n {
        rb.row(&[(i, -one)], T::zero());
    }
    rb.cone(Cone::NonNeg(n));
    for i in 0..n {
        rb.row(&[(i, one)], one);
    }
    rb.cone(Cone::NonNeg(n));
    for i in 0..n {
        rb.row(&[(n + i, -one)], T::zero());
    }
    rb.cone(Cone::NonNeg(n));
    if let Some(u) = &inst.y_upper {
        for i in 0..n {
            rb.row(&[(n + i, one)], u[i]);
        }
        rb.cone(Cone::NonNeg(n));
    }
    if !inst.side_constraints.is_empty() {
        for sc in &inst.side_constraints {
            let mut coeffs = Vec::with_capacity(2 * n);
            for i in 0..n {
                if sc.gx[i] != T::zero() {
                    coeffs.push((i, sc.gx[i]));
                }
                if sc.gy[i] != T::zero() {
                    coeffs.push((n + i, sc.gy[i]));
                }
            }
            rb.row(&coeffs, sc.rhs);
        }
        rb.cone(Cone::NonNeg(inst.side_constraints.len()));
    }
}

/// Core builder behind the naive, perspective, and fixed-pattern forms.
/// `fixing[i] = Some(v)` pins `x_i = v` with an equality row (and `y_i = 0`
/// when `v` is zero); `d` is the perspective diagonal, all zeros for the
/// naive form.
fn build_split_form<T: Real>(
    inst: &QiInstance<T>,
    d: &[T],
    fixing: Option<&[Option<bool>]>,
) -> Result<Built<T>, Error> {
    check_diag(inst, d)?;
    let n = inst.n;
    let one = T::one();
    let s2 = T::of(2.0).sqrt();

    let max_d = d.iter().fold(T::zero(), |acc, &v| acc.max(v));
    // Entries at the scale of the PSD-repair noise are treated as zero:
    // folding them back into the quadratic keeps the objective exact,
    // while emitting them would put near-zero weights on cone variables
    // the solver then cannot pin down.
    let cone_cut = (T::of(DIAG_EPS) * (one + max_d)).max(T::of(DIAG_DUST) * inst.psd_scale());
    let emitted: Vec<usize> = (0..n).filter(|&i| d[i] > cone_cut).collect();
    let d_kept: Vec<T> =
        (0..n).map(|i| if d[i] > cone_cut { d[i] } else { T::zero() }).collect();
    let residual = inst.q.minus_diag(&d_kept);
    let l = factor_residual(&residual, inst.psd_scale())?;
    let rank = l.as_ref().map_or(0, |m| m.cols());

    let mut layout = Layout::new(n);
    let mut num_vars = 2 * n;
    for &i in &emitted {
        layout.t_var[i] = Some(num_vars);
        num_vars += 1;
    }
    if rank > 0 {
        layout.r_var = Some(num_vars);
        num_vars += 1;
    }

    let mut rb = RowBuilder::new(num_vars);

    if let Some(fixing) = fixing {
        if fixing.len() != n {
            return Err(Error::Shape(format!(
                "fixing vector has length {}, instance has n = {n}",
                fixing.len()
            )));
        }
        let mut pins = 0;
        for (i, f) in fixing.iter().enumerate() {
            if let Some(v) = f {
                rb.row(&[(i, one)], if *v { one } else { T::zero() });
                pins += 1;
            }
        }
        for (i, f) in fixing.iter().enumerate() {
            if *f == Some(false) {
                rb.row(&[(n + i, one)], T::zero());
                pins += 1;
            }
        }
        if pins > 0 {
            rb.cone(Cone::Zero(pins));
        }
    }

    push_bound_rows(&mut rb, inst);

    for &i in &emitted {
        layout.rq3_row[i] = Some(rb.rows());
        let t = layout.t_var[i].unwrap();
        rb.row(&[(t, -one)], T::zero());
        rb.row(&[(i, -one)], T::zero());
        rb.row(&[(n + i, -s2)], T::zero());
        rb.cone(Cone::RotatedQuad(3));
    }

    if let Some(l) = &l {
        let r = layout.r_var.unwrap();
        rb.row(&[(r, -one)], T::zero());
        rb.row(&[], T::of(0.5));
        for k in 0..rank {
            let coeffs: Vec<(usize, T)> = (0..n)
                .filter(|&j| l.at(j, k) != T::zero())
                .map(|j| (n + j, -l.at(j, k)))
                .collect();
            rb.row(&coeffs, T::zero());
        }
        rb.cone(Cone::RotatedQuad(2 + rank));
    }

    let mut c = vec![T::zero(); num_vars];
    c[..n].copy_from_slice(&inst.a);
    c[n..2 * n].copy_from_slice(&inst.b);
    for &i in &emitted {
        c[layout.t_var[i].unwrap()] = d[i];
    }
    if let Some(r) = layout.r_var {
        c[r] = one;
    }

    Ok(Built { prog: rb.finish(c, T::zero()), layout })
}

pub(crate) fn build_naive<T: Real>(inst: &QiInstance<T>) -> Result<Built<T>, Error> {
    build_split_form(inst, &vec![T::zero(); inst.n], None)
}

pub(crate) fn build_perspective<T: Real>(
    inst: &QiInstance<T>,
    d: &[T],
) -> Result<Built<T>, Error> {
    build_split_form(inst, d, None)
}

/// Builds the relaxation with indicators pinned to the given values.
/// Unpinned indicators stay relaxed in `[0, 1]`; `d` strengthens them with
/// perspective cones, `None` meaning no split (the pure epigraph form).
pub(crate) fn build_fixed_pattern<T: Real>(
    inst: &QiInstance<T>,
    fixing: &[Option<bool>],
    d: Option<&[T]>,
) -> Result<Built<T>, Error> {
    let zeros;
    let d = match d {
        Some(d) => d,
        None => {
            zeros = vec![T::zero(); inst.n];
            &zeros
        }
    };
    build_split_form(inst, d, Some(fixing))
}

/// The matrix-lifted perspective relaxation: `Y ~ y y'` with the rotated
/// cone `Y_ii x_i >= y_i^2` on every coordinate and the Schur block
/// `[[1, y'], [y, Y]]` positive semidefinite. On a rank-deficient `Q` the
/// lift is quotiented by the null space first (see [`Reduction`]).
pub(crate) fn build_optpersp<T: Real>(inst: &QiInstance<T>) -> Result<Built<T>, Error> {
    if let Some(red) = reduce_lift(&inst.q, inst.psd_scale())? {
        return Ok(build_optpersp_reduced(inst, red));
    }
    let n = inst.n;
    let one = T::one();
    let s2 = T::of(2.0).sqrt();
    let mat_off = 2 * n;
    let num_vars = 2 * n + tri_len(n);

    let mut layout = Layout::new(n);
    layout.mat_off = Some(mat_off);
    layout.mat_dim = n;

    let mut rb = RowBuilder::new(num_vars);
    push_bound_rows(&mut rb, inst);

    for i in 0..n {
        layout.rq3_row[i] = Some(rb.rows());
        rb.row(&[(mat_off + svec_index(n, i, i), -one)], T::zero());
        rb.row(&[(i, -one)], T::zero());
        rb.row(&[(n + i, -s2)], T::zero());
        rb.cone(Cone::RotatedQuad(3));
    }

    // Schur block [[1, y'], [y, Y]], packed column-major lower. The border
    // entries are off-diagonal in the big matrix, hence the sqrt2.
    rb.row(&[], one);
    for i in 0..n {
        rb.row(&[(n + i, -s2)], T::zero());
    }
    for j in 0..n {
        for i in j..n {
            rb.row(&[(mat_off + svec_index(n, i, j), -one)], T::zero());
        }
    }
    rb.cone(Cone::PsdTriangle(n + 1));

    let mut c = vec![T::zero(); num_vars];
    c[..n].copy_from_slice(&inst.a);
    c[n..2 * n].copy_from_slice(&inst.b);
    c[mat_off..].copy_from_slice(&svec_pack(&inst.q));

    Ok(Built { prog: rb.finish(c, T::zero()), layout })
}

/// The quotiented form of [`build_optpersp`]. Variables are `x`, `y` and
/// the packed compression `W = B' Y B`; the Schur block shrinks to
/// `[[1, (B'y)'], [B'y, W]]` (the null components of `y` in the border are
/// absorbed by the escaping part of the lift), rotated cones survive only
/// on anchored coordinates with `Y_ii` spelled as the functional
/// `(B W B')_ii`, and the objective becomes `<diag(eigs), W>` since the
/// basis diagonalizes `Q`.
fn build_optpersp_reduced<T: Real>(inst: &QiInstance<T>, red: Reduction<T>) -> Built<T> {
    let n = inst.n;
    let r = red.basis.cols();
    let one = T::one();
    let s2 = T::of(2.0).sqrt();
    let mat_off = 2 * n;
    let num_vars = 2 * n + tri_len(r);

    let mut layout = Layout::new(n);
    if r > 0 {
        layout.mat_off = Some(mat_off);
        layout.mat_dim = r;
    }

    let mut rb = RowBuilder::new(num_vars);
    push_bound_rows(&mut rb, inst);

    for i in 0..n {
        if !red.anchored[i] {
            continue;
        }
        layout.rq3_row[i] = Some(rb.rows());
        let mut coeffs = Vec::with_capacity(tri_len(r));
        for p in 0..r {
            for q in p..r {
                let w = if p == q {
                    red.basis.at(i, p) * red.basis.at(i, p)
                } else {
                    s2 * red.basis.at(i, p) * red.basis.at(i, q)
                };
                if w != T::zero() {
                    coeffs.push((mat_off + svec_index(r, q, p), -w));
                }
            }
        }
        rb.row(&coeffs, T::zero());
        rb.row(&[(i, -one)], T::zero());
        rb.row(&[(n + i, -s2)], T::zero());
        rb.cone(Cone::RotatedQuad(3));
    }

    if r > 0 {
        rb.row(&[], one);
        for p in 0..r {
            let coeffs: Vec<(usize, T)> = (0..n)
                .filter(|&j| red.basis.at(j, p) != T::zero())
                .map(|j| (n + j, -s2 * red.basis.at(j, p)))
                .collect();
            rb.row(&coeffs, T::zero());
        }
        for q in 0..r {
            for p in q..r {
                rb.row(&[(mat_off + svec_index(r, p, q), -one)], T::zero());
            }
        }
        rb.cone(Cone::PsdTriangle(r + 1));
    }

    let mut c = vec![T::zero(); num_vars];
    c[..n].copy_from_slice(&inst.a);
    c[n..2 * n].copy_from_slice(&inst.b);
    for p in 0..r {
        c[mat_off + svec_index(r, p, p)] = red.eigs[p];
    }

    layout.reduction = Some(red);
    Built { prog: rb.finish(c, T::zero()), layout }
}

/// The full binary lift: `Z ~ (y; x)(y; x)'` with complementarity encoded
/// as `Z_{i, n+i} = y_i`, the binary square as `Z_{n+i, n+i} = x_i`, and
/// the bordered matrix `[[1, (y; x)'], [(y; x), Z]]` positive semidefinite.
/// On a rank-deficient `Q` the lift is quotiented by the null space first
/// (see [`Reduction`]).
pub(crate) fn build_shor<T: Real>(inst: &QiInstance<T>) -> Result<Built<T>, Error> {
    if let Some(red) = reduce_lift(&inst.q, inst.psd_scale())? {
        return Ok(build_shor_reduced(inst, red));
    }
    let n = inst.n;
    let one = T::one();
    let s2 = T::of(2.0).sqrt();
    let m2 = 2 * n;
    let mat_off = 2 * n;
    let num_vars = 2 * n + tri_len(m2);

    let mut layout = Layout::new(n);
    layout.mat_off = Some(mat_off);
    layout.mat_dim = m2;

    let mut rb = RowBuilder::new(num_vars);

    let inv_s2 = one / s2;
    for i in 0..n {
        rb.row(&[(n + i, -one), (mat_off + svec_index(m2, n + i, i), inv_s2)], T::zero());
    }
    for i in 0..n {
        rb.row(&[(i, -one), (mat_off + svec_index(m2, n + i, n + i), one)], T::zero());
    }
    rb.cone(Cone::Zero(m2));

    push_bound_rows(&mut rb, inst);

    rb.row(&[], one);
    for i in 0..n {
        rb.row(&[(n + i, -s2)], T::zero());
    }
    for i in 0..n {
        rb.row(&[(i, -s2)], T::zero());
    }
    for j in 0..m2 {
        for i in j..m2 {
            rb.row(&[(mat_off + svec_index(m2, i, j), -one)], T::zero());
        }
    }
    rb.cone(Cone::PsdTriangle(m2 + 1));

    let big = SymMatrix::from_fn(m2, |i, j| {
        if i < n && j < n {
            inst.q.entry(i, j)
        } else {
            T::zero()
        }
    });
    let mut c = vec![T::zero(); num_vars];
    c[..n].copy_from_slice(&inst.a);
    c[n..2 * n].copy_from_slice(&inst.b);
    c[mat_off..].copy_from_slice(&svec_pack(&big));

    Ok(Built { prog: rb.finish(c, T::zero()), layout })
}

/// The quotiented form of [`build_shor`]. The lifted block shrinks to
/// `M = [[W, U], [U', V]]` over range(Q) plus the full `x` space, bordered
/// by `(B'y; x)`. Binary squares `V_ii = x_i` survive for every
/// coordinate, but the complementarity pin `y_i = U-entry` survives only
/// on anchored coordinates: elsewhere the escaping null block absorbs any
/// cross term, so the coupling carries no information in the limit.
fn build_shor_reduced<T: Real>(inst: &QiInstance<T>, red: Reduction<T>) -> Built<T> {
    let n = inst.n;
    let r = red.basis.cols();
    let k = r + n;
    let one = T::one();
    let s2 = T::of(2.0).sqrt();
    let inv_s2 = one / s2;
    let mat_off = 2 * n;
    let num_vars = 2 * n + tri_len(k);

    let mut layout = Layout::new(n);
    layout.mat_off = Some(mat_off);
    layout.mat_dim = k;

    let mut rb = RowBuilder::new(num_vars);

    let mut pins = 0;
    for i in 0..n {
        if !red.anchored[i] {
            continue;
        }
        let mut coeffs = vec![(n + i, -one)];
        for p in 0..r {
            let w = red.basis.at(i, p);
            if w != T::zero() {
                coeffs.push((mat_off + svec_index(k, r + i, p), w * inv_s2));
            }
        }
        rb.row(&coeffs, T::zero());
        pins += 1;
    }
    for i in 0..n {
        rb.row(&[(i, -one), (mat_off + svec_index(k, r + i, r + i), one)], T::zero());
        pins += 1;
    }
    rb.cone(Cone::Zero(pins));

    push_bound_rows(&mut rb, inst);

    rb.row(&[], one);
    for p in 0..r {
        let coeffs: Vec<(usize, T)> = (0..n)
            .filter(|&j| red.basis.at(j, p) != T::zero())
            .map(|j| (n + j, -s2 * red.basis.at(j, p)))
            .collect();
        rb.row(&coeffs, T::zero());
    }
    for i in 0..n {
        rb.row(&[(i, -s2)], T::zero());
    }
    for q in 0..k {
        for p in q..k {
            rb.row(&[(mat_off + svec_index(k, p, q), -one)], T::zero());
        }
    }
    rb.cone(Cone::PsdTriangle(k + 1));

    let mut c = vec![T::zero(); num_vars];
    c[..n].copy_from_slice(&inst.a);
    c[n..2 * n].copy_from_slice(&inst.b);
    for p in 0..r {
        c[mat_off + svec_index(k, p, p)] = red.eigs[p];
    }

    layout.reduction = Some(red);
    Built { prog: rb.finish(c, T::zero()), layout }
}

/// Solution of one relaxation, read back into problem coordinates.
#[derive(Debug, Clone)]
pub struct RelaxationResult<T> {
    pub kind: RelaxationKind,
    pub status: SolveStatus,
    /// Optimal value of the relaxation; a lower bound on the indicator
    /// problem when the status is `Optimal`.
    pub bound: ExtReal<T>,
    pub x: Vec<T>,
    pub y: Vec<T>,
    /// The lifted matrix: `Y` (side `n`) for optpersp, `Z` (side `2n`)
    /// for shor. When `Q` is singular the program is solved on the
    /// quotient by its null space and this is a representative point:
    /// the infimum in `bound` is approached only as the null-space part
    /// grows, so the representative carries a large finite null inflation
    /// and `x` is nudged up (by at most about `2e-6`) where needed to
    /// keep the reported minors `Y_ii x_i >= y_i^2` valid. In every case
    /// the reported diagonal pairs get a noise-level lift so those minors
    /// clear zero despite iterate noise; the solver's `bound` is untouched
    /// by this.
    pub matrix_part: Option<SymMatrix<T>>,
    /// Dual triples `(w_u, w_v, w_w)` of the per-coordinate rotated cones,
    /// present when every coordinate carries one and always for optpersp,
    /// where coordinates quotiented out report a zero triple.
    pub rotated_cone_duals: Option<Vec<[T; 3]>>,
    pub iterations: usize,
    pub residuals: Residuals<T>,
}

/// Inflation weight for the representative matrix of a quotiented form,
/// sized so every lifted minor clears zero with an `x` adjustment of at
/// most about `2 / INFLATE`.
fn inflation_weight<T: Real>(red: &Reduction<T>, y: &[T]) -> T {
    let mut ratio = T::one();
    for (i, &anchored) in red.anchored.iter().enumerate() {
        if anchored {
            continue;
        }
        let nd = red.null_proj.entry(i, i);
        if nd > T::of(ANCHOR_TOL) {
            ratio = ratio.max((T::one() + y[i] * y[i]) / nd);
        }
    }
    T::of(INFLATE) * ratio
}

/// Expands the compressed `W = B' Y B` back to a full representative `Y`.
/// The exact infimum is approached as the null-space part of the lift
/// diverges; the representative adds a large finite multiple of the null
/// projector instead and lifts released indicators just enough that the
/// reported point satisfies the minor inequalities `Y_ii x_i >= y_i^2`.
fn representative_optpersp<T: Real>(
    red: &Reduction<T>,
    w: Option<&SymMatrix<T>>,
    x: &mut [T],
    y: &[T],
) -> SymMatrix<T> {
    let n = y.len();
    let r = red.basis.cols();
    let tau = inflation_weight(red, y);
    let ymat = SymMatrix::from_fn(n, |i, j| {
        let mut acc = tau * red.null_proj.entry(i, j);
        if let Some(w) = w {
            for p in 0..r {
                for q in 0..r {
                    acc = acc + red.basis.at(i, p) * w.entry(p, q) * red.basis.at(j, q);
                }
            }
        }
        acc
    });
    for i in 0..n {
        if red.anchored[i] {
            continue;
        }
        let yii = ymat.entry(i, i);
        if yii > T::zero() {
            let need = (T::of(2.0) * y[i] * y[i] / yii).min(T::one());
            if x[i] < need {
                x[i] = need;
            }
        }
    }
    ymat
}

/// Same expansion for the full binary lift: `Y`, cross and `V` blocks come
/// from the compressed solution, the null inflation lands on the `Y`
/// block, and the stored `V` diagonal is synchronized with the (possibly
/// lifted) reported `x`.
fn representative_shor<T: Real>(
    red: &Reduction<T>,
    m: &SymMatrix<T>,
    x: &mut [T],
    y: &[T],
) -> SymMatrix<T> {
    let n = y.len();
    let r = red.basis.cols();
    let tau = inflation_weight(red, y);
    let mut z = SymMatrix::zeros(2 * n);
    for i in 0..n {
        for j in i..n {
            let mut acc = tau * red.null_proj.entry(i, j);
            for p in 0..r {
                for q in 0..r {
                    acc = acc + red.basis.at(i, p) * m.entry(p, q) * red.basis.at(j, q);
                }
            }
            z.set(i, j, acc);
        }
    }
    for i in 0..n {
        for j in 0..n {
            let mut acc = T::zero();
            for p in 0..r {
                acc = acc + red.basis.at(i, p) * m.entry(p, r + j);
            }
            z.set(i, n + j, acc);
        }
    }
    for i in 0..n {
        for j in i..n {
            z.set(n + i, n + j, m.entry(r + i, r + j));
        }
    }
    for i in 0..n {
        if !red.anchored[i] {
            let zii = z.entry(i, i);
            let coupling = y[i].abs().max(z.entry(i, n + i).abs());
            if zii > T::zero() {
                let need = (T::of(2.0) * coupling * coupling / zii).min(T::one());
                if x[i] < need {
                    x[i] = need;
                }
            }
        }
        z.set(n + i, n + i, x[i]);
    }
    z
}

/// Noise-level repair of one reported minor `diag * ind >= cross^2`. The
/// cone constraints bind only to solver tolerance, so a returned point can
/// sit a hair outside and near-zero entries can even come back negative.
/// Negative noise is clamped away first; if the minor still fails, the
/// indicator is lifted toward its ceiling of one before the diagonal is
/// touched, so the diagonal never grows past `max(|cross|, cross^2)` and
/// neither entry ever shrinks. `None` when nothing changes.
fn polish_pair<T: Real>(diag: T, ind: T, cross: T) -> Option<(T, T)> {
    let v = cross * cross;
    let diag0 = diag.max(T::zero());
    let ind0 = ind.max(T::zero()).min(T::one());
    if v <= diag0 * ind0 {
        if diag0 == diag && ind0 == ind {
            return None;
        }
        return Some((diag0, ind0));
    }
    if v <= diag0 {
        return Some((diag0, v / diag0));
    }
    // v > 0 here, so the indicator floor is strictly positive.
    let ind_new = cross.abs().max(ind0).min(T::one());
    Some((v / ind_new, ind_new))
}

pub(crate) fn extract_solution<T: Real>(
    kind: RelaxationKind,
    built: &Built<T>,
    sol: &ConicSolution<T>,
) -> RelaxationResult<T> {
    let n = built.layout.n;
    let mut x = sol.z[..n].to_vec();
    let y = sol.z[n..2 * n].to_vec();
    let solved_point = !matches!(
        sol.status,
        SolveStatus::PrimalInfeasible | SolveStatus::DualInfeasible
    );
    let raw_mat = built
        .layout
        .mat_off
        .map(|off| svec_unpack(&sol.z[off..off + tri_len(built.layout.mat_dim)], built.layout.mat_dim));
    let mut matrix_part = match &built.layout.reduction {
        Some(red) if solved_point => Some(match kind {
            RelaxationKind::Shor => representative_shor(
                red,
                raw_mat.as_ref().expect("binary lift always has a matrix block"),
                &mut x,
                &y,
            ),
            _ => representative_optpersp(red, raw_mat.as_ref(), &mut x, &y),
        }),
        Some(_) => None,
        None => raw_mat,
    };
    if solved_point {
        if let Some(mat) = matrix_part.as_mut() {
            match kind {
                RelaxationKind::Shor => {
                    for i in 0..n {
                        let (zii, xii, cross) =
                            (mat.entry(i, i), mat.entry(n + i, n + i), mat.entry(i, n + i));
                        if let Some((dg, ind)) = polish_pair(zii, xii, cross) {
                            mat.set(i, i, dg);
                            mat.set(n + i, n + i, ind);
                            x[i] = ind;
                        }
                    }
                }
                _ => {
                    for i in 0..n {
                        if let Some((dg, ind)) = polish_pair(mat.entry(i, i), x[i], y[i]) {
                            mat.set(i, i, dg);
                            x[i] = ind;
                        }
                    }
                }
            }
        }
    }
    let rotated_cone_duals = if n == 0 {
        None
    } else if kind == RelaxationKind::OptPersp {
        // Quotiented coordinates carry no cone; their multiplier is zero.
        Some(
            (0..n)
                .map(|i| match built.layout.rq3_row[i] {
                    Some(row) => [sol.w[row], sol.w[row + 1], sol.w[row + 2]],
                    None => [T::zero(); 3],
                })
                .collect(),
        )
    } else if built.layout.rq3_row.iter().all(|r| r.is_some()) {
        Some(
            built
                .layout
                .rq3_row
                .iter()
                .map(|r| {
                    let r = r.unwrap();
                    [sol.w[r], sol.w[r + 1], sol.w[r + 2]]
                })
                .collect(),
        )
    } else {
        None
    };
    let bound = match sol.status {
        SolveStatus::PrimalInfeasible => ExtReal::PosInf,
        SolveStatus::DualInfeasible => ExtReal::NegInf,
        _ => ExtReal::Finite(sol.objective),
    };
    RelaxationResult {
        kind,
        status: sol.status,
        bound,
        x,
        y,
        matrix_part,
        rotated_cone_duals,
        iterations: sol.iterations,
        residuals: sol.residuals,
    }
}

/// Builds and solves the chosen relaxation of a validated instance.
pub fn relax<T: Real>(
    inst: &QiInstance<T>,
    relaxation: &Relaxation<T>,
    settings: &SolverSettings<T>,
) -> Result<RelaxationResult<T>, Error> {
    let violations = inst.validate();
    if !violations.is_empty() {
        return Err(Error::Invalid(violations));
    }
    let built = match relaxation {
        Relaxation::Naive => build_naive(inst)?,
        Relaxation::Perspective(d) => build_perspective(inst, d)?,
        Relaxation::OptPersp => build_optpersp(inst)?,
        Relaxation::Shor => build_shor(inst)?,
    };
    let sol = solve(&built.prog, settings)?;
    Ok(extract_solution(relaxation.kind(), &built, &sol))
}

/// The perspective of the square: `y^2 / x` for `x > 0`, zero when
/// `y = 0` (whatever `x >= 0` is), plus infinity otherwise. This is the
/// closure of the function on `x > 0`, which is what makes the objective
/// of the strengthened relaxations lower semicontinuous.
pub fn perspective_term<T: Real>(y: T, x: T) -> ExtReal<T> {
    if x > T::zero() {
        ExtReal::Finite(y * y / x)
    } else if y == T::zero() {
        ExtReal::Finite(T::zero())
    } else {
        ExtReal::PosInf
    }
}

/// Objective value of the split form at a point, honoring the perspective
/// convention exactly: `a'x + b'y + sum_i d_i * persp(y_i, x_i) + y'Ry`
/// with `R = Q - diag(d)`.
pub fn perspective_objective_value<T: Real>(
    inst: &QiInstance<T>,
    x: &[T],
    y: &[T],
    d: &[T],
) -> Result<ExtReal<T>, Error> {
    let n = inst.n;
    if x.len() != n || y.len() != n || d.len() != n {
        return Err(Error::Shape(format!(
            "expected three length-{n} vectors, got {}, {}, {}",
            x.len(),
            y.len(),
            d.len()
        )));
    }
    if x.iter().chain(y).chain(d).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("perspective objective input"));
    }
    let mut acc = T::zero();
    for i in 0..n {
        acc = acc + inst.a[i] * x[i] + inst.b[i] * y[i];
    }
    for i in 0..n {
        if d[i] == T::zero() {
            continue;
        }
        match perspective_term(y[i], x[i]) {
            ExtReal::Finite(v) => acc = acc + d[i] * v,
            _ => return Ok(ExtReal::PosInf),
        }
    }
    let residual = inst.q.minus_diag(d);
    acc = acc + residual.quad_form(y);
    Ok(ExtReal::Finite(acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::SideConstraint;

    /// One indicator, one continuous variable: min 3x - 4y + y^2 with the
    /// indicator coupling. Integer optimum -1 at x = 1, y = 2; dropping
    /// the coupling entirely gives -4 at x = 0, y = 2.
    fn single_coordinate() -> QiInstance<f64> {
        QiInstance::new(
            vec![3.0],
            vec![-4.0],
            SymMatrix::from_rows(&[vec![1.0]]).unwrap(),
        )
    }

    fn settings() -> SolverSettings<f64> {
        SolverSettings::default()
    }

    #[test]
    fn naive_drops_the_coupling() {
        let inst = single_coordinate();
        let res = relax(&inst, &Relaxation::Naive, &settings()).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        let v = res.bound.finite().unwrap();
        assert!((v + 4.0).abs() < 1e-5, "naive bound {v}");
        assert!(res.x[0] < 1e-3, "x should collapse to 0, got {}", res.x[0]);
        assert!((res.y[0] - 2.0).abs() < 1e-3);
    }

    #[test]
    fn perspective_closes_the_gap_on_one_coordinate() {
        let inst = single_coordinate();
        let res = relax(&inst, &Relaxation::Perspective(vec![1.0]), &settings()).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        let v = res.bound.finite().unwrap();
        assert!((v + 1.0).abs() < 1e-5, "perspective bound {v}");
    }

    #[test]
    fn perspective_rejects_oversized_diagonal() {
        let inst = single_coordinate();
        let err = relax(&inst, &Relaxation::Perspective(vec![2.0]), &settings()).unwrap_err();
        assert!(matches!(err, Error::InfeasibleDiagonal { .. }), "got {err:?}");
    }

    #[test]
    fn perspective_rejects_negative_diagonal() {
        let inst = single_coordinate();
        let err = relax(&inst, &Relaxation::Perspective(vec![-0.5]), &settings()).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)), "got {err:?}");
    }

    #[test]
    fn negligible_diagonal_emits_no_cone() {
        let inst = single_coordinate();
        let built = build_perspective(&inst, &[1e-13]).unwrap();
        assert!(built.layout.t_var[0].is_none());
        let sol = solve(&built.prog, &settings()).unwrap();
        assert!((sol.objective + 4.0).abs() < 1e-5, "should match naive, got {}", sol.objective);
    }

    #[test]
    fn optpersp_matches_hand_solution() {
        let inst = single_coordinate();
        let res = relax(&inst, &Relaxation::OptPersp, &settings()).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        let v = res.bound.finite().unwrap();
        assert!((v + 1.0).abs() < 1e-5, "optpersp bound {v}");
        assert!((res.x[0] - 1.0).abs() < 1e-3);
        assert!((res.y[0] - 2.0).abs() < 1e-3);
        let ymat = res.matrix_part.unwrap();
        assert!((ymat.entry(0, 0) - 4.0).abs() < 1e-3);
        // The optimal dual of the rotated cone is not unique here: every
        // diagonal in [3/4, 1] attains the same perspective bound, so only
        // membership in that interval is stable across solvers.
        let duals = res.rotated_cone_duals.unwrap();
        assert!(
            duals[0][0] > 0.74 && duals[0][0] < 1.01,
            "dual diagonal {:?}",
            duals[0]
        );
    }

    #[test]
    fn shor_matches_hand_solution() {
        let inst = single_coordinate();
        let res = relax(&inst, &Relaxation::Shor, &settings()).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        let v = res.bound.finite().unwrap();
        assert!((v + 1.0).abs() < 1e-5, "shor bound {v}");
        let z = res.matrix_part.unwrap();
        assert_eq!(z.dim(), 2);
        assert!((z.entry(0, 0) - 4.0).abs() < 1e-2, "Z_yy {}", z.entry(0, 0));
        assert!((z.entry(0, 1) - 2.0).abs() < 1e-2, "Z_yx {}", z.entry(0, 1));
        assert!((z.entry(1, 1) - 1.0).abs() < 1e-2, "Z_xx {}", z.entry(1, 1));
    }

    #[test]
    fn fixed_pattern_pins_indicators() {
        let inst = single_coordinate();
        let on = build_fixed_pattern(&inst, &[Some(true)], None).unwrap();
        let sol = solve(&on.prog, &settings()).unwrap();
        assert!((sol.objective + 1.0).abs() < 1e-5, "x=1 value {}", sol.objective);

        let off = build_fixed_pattern(&inst, &[Some(false)], None).unwrap();
        let sol = solve(&off.prog, &settings()).unwrap();
        assert!(sol.objective.abs() < 1e-6, "x=0 value {}", sol.objective);
    }

    #[test]
    fn fixed_pattern_respects_side_constraints() {
        let mut inst = single_coordinate();
        inst.side_constraints.push(SideConstraint {
            gx: vec![1.0],
            gy: vec![0.0],
            rhs: 0.5,
        });
        let on = build_fixed_pattern(&inst, &[Some(true)], None).unwrap();
        let sol = solve(&on.prog, &settings()).unwrap();
        assert_eq!(sol.status, SolveStatus::PrimalInfeasible);
    }

    #[test]
    fn two_coordinate_relaxations_are_ordered() {
        // Coupled pair with an off-diagonal quadratic; every relaxation
        // must sandwich between naive and the integer value.
        let inst = QiInstance::new(
            vec![1.0, 1.0],
            vec![-3.0, -3.0],
            SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap(),
        );
        let naive = relax(&inst, &Relaxation::Naive, &settings()).unwrap();
        let persp = relax(&inst, &Relaxation::Perspective(vec![1.0, 1.0]), &settings()).unwrap();
        let opt = relax(&inst, &Relaxation::OptPersp, &settings()).unwrap();
        let shor = relax(&inst, &Relaxation::Shor, &settings()).unwrap();
        let slack = 1e-4;
        let nv = naive.bound.finite().unwrap();
        let pv = persp.bound.finite().unwrap();
        let ov = opt.bound.finite().unwrap();
        let sv = shor.bound.finite().unwrap();
        assert!(nv <= pv + slack, "naive {nv} vs persp {pv}");
        assert!(pv <= ov + slack, "persp {pv} vs optpersp {ov}");
        assert!((ov - sv).abs() < 1e-4, "optpersp {ov} vs shor {sv}");
    }

    #[test]
    fn singular_q_collapses_every_relaxation_to_naive() {
        // Rank-one all-ones quadratic: the lift can grow along the null
        // direction at zero cost, so the strongest bound equals the naive
        // one and the optimal perspective diagonal is zero.
        let inst = QiInstance {
            n: 2,
            a: vec![1.0, 1.0],
            b: vec![-3.0, -3.0],
            q: SymMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap(),
            side_constraints: vec![],
            y_upper: Some(vec![10.0, 10.0]),
        };
        let naive = relax(&inst, &Relaxation::Naive, &settings()).unwrap();
        let opt = relax(&inst, &Relaxation::OptPersp, &settings()).unwrap();
        let shor = relax(&inst, &Relaxation::Shor, &settings()).unwrap();
        for r in [&naive, &opt, &shor] {
            assert_eq!(r.status, SolveStatus::Optimal, "{:?}", r.kind);
            let v = r.bound.finite().unwrap();
            assert!((v + 2.25).abs() < 1e-4, "{:?} bound {v}", r.kind);
        }
        let duals = opt.rotated_cone_duals.as_ref().unwrap();
        assert_eq!(duals[0], [0.0; 3]);
        assert_eq!(duals[1], [0.0; 3]);
        // Representative points keep the minor inequalities valid even
        // though the infimum is only approached along the null direction.
        let ymat = opt.matrix_part.as_ref().unwrap();
        for i in 0..2 {
            let minor = ymat.entry(i, i) * opt.x[i] - opt.y[i] * opt.y[i];
            assert!(minor >= 0.0, "optpersp minor {i} = {minor}");
            assert!(opt.x[i] <= 1e-3, "x lift should stay tiny, got {}", opt.x[i]);
        }
        let z = shor.matrix_part.as_ref().unwrap();
        assert_eq!(z.dim(), 4);
        for i in 0..2 {
            let minor =
                z.entry(i, i) * z.entry(2 + i, 2 + i) - z.entry(i, 2 + i) * z.entry(i, 2 + i);
            assert!(minor >= 0.0, "shor minor {i} = {minor}");
        }
    }

    #[test]
    fn mixed_rank_quadratic_keeps_the_regular_block_tight() {
        // Block diagonal: a strictly convex coordinate next to an all-ones
        // pair. The strengthening only has traction on the regular block,
        // so the bound is its perspective value plus the naive value of
        // the singular pair, and the extracted diagonal vanishes there.
        let inst = QiInstance::new(
            vec![3.0, 1.0, 1.0],
            vec![-4.0, -3.0, -3.0],
            SymMatrix::from_rows(&[
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 1.0],
                vec![0.0, 1.0, 1.0],
            ])
            .unwrap(),
        );
        let opt = relax(&inst, &Relaxation::OptPersp, &settings()).unwrap();
        assert_eq!(opt.status, SolveStatus::Optimal);
        let ov = opt.bound.finite().unwrap();
        assert!((ov + 3.25).abs() < 1e-4, "optpersp bound {ov}");
        let shor = relax(&inst, &Relaxation::Shor, &settings()).unwrap();
        let sv = shor.bound.finite().unwrap();
        assert!((ov - sv).abs() < 1e-4, "optpersp {ov} vs shor {sv}");
        let duals = opt.rotated_cone_duals.as_ref().unwrap();
        assert!(
            duals[0][0] > 0.74 && duals[0][0] < 1.01,
            "coupled dual {:?}",
            duals[0]
        );
        assert_eq!(duals[1], [0.0; 3]);
        assert_eq!(duals[2], [0.0; 3]);
        // Feeding the extracted diagonal back through the plain
        // perspective form reproduces the strongest bound.
        let d = vec![duals[0][0], 0.0, 0.0];
        let persp = relax(&inst, &Relaxation::Perspective(d), &settings()).unwrap();
        let pv = persp.bound.finite().unwrap();
        assert!((pv - ov).abs() < 1e-4, "persp(d*) {pv} vs optpersp {ov}");
    }

    #[test]
    fn zero_quadratic_reduces_to_a_linear_program() {
        let inst = QiInstance::new(
            vec![2.0],
            vec![1.0],
            SymMatrix::from_rows(&[vec![0.0]]).unwrap(),
        );
        for form in [Relaxation::OptPersp, Relaxation::Shor] {
            let res = relax(&inst, &form, &settings()).unwrap();
            assert_eq!(res.status, SolveStatus::Optimal, "{:?}", res.kind);
            let v = res.bound.finite().unwrap();
            assert!(v.abs() < 1e-5, "{:?} bound {v}", res.kind);
        }
        let res = relax(&inst, &Relaxation::OptPersp, &settings()).unwrap();
        let duals = res.rotated_cone_duals.as_ref().unwrap();
        assert_eq!(duals[0], [0.0; 3]);
        let ymat = res.matrix_part.as_ref().unwrap();
        assert!(
            ymat.entry(0, 0) >= 1.0,
            "null inflation should dominate, got {}",
            ymat.entry(0, 0)
        );
    }

    #[test]
    fn built_programs_validate() {
        let inst = QiInstance {
            n: 2,
            a: vec![1.0, -1.0],
            b: vec![-2.0, 1.0],
            q: SymMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap(),
            side_constraints: vec![SideConstraint {
                gx: vec![1.0, 1.0],
                gy: vec![0.2, -0.1],
                rhs: 1.5,
            }],
            y_upper: Some(vec![4.0, 4.0]),
        };
        for built in [
            build_naive(&inst).unwrap(),
            build_perspective(&inst, &[0.5, 0.5]).unwrap(),
            build_optpersp(&inst).unwrap(),
            build_shor(&inst).unwrap(),
            build_fixed_pattern(&inst, &[Some(true), None], Some(&[0.5, 0.5])).unwrap(),
        ] {
            built.prog.validate().unwrap();
        }
        // Same shape with a singular quadratic so the quotiented builders
        // get exercised too.
        let singular = QiInstance {
            q: SymMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap(),
            ..inst
        };
        for built in [build_optpersp(&singular).unwrap(), build_shor(&singular).unwrap()] {
            built.prog.validate().unwrap();
        }
    }

    #[test]
    fn perspective_convention_is_exact() {
        assert_eq!(perspective_term(0.0, 0.0), ExtReal::Finite(0.0));
        assert_eq!(perspective_term(3.0, 0.0), ExtReal::PosInf);
        assert_eq!(perspective_term(2.0, 4.0), ExtReal::Finite(1.0));
        assert_eq!(perspective_term(0.0, -1.0), ExtReal::Finite(0.0));
        assert_eq!(perspective_term(1.0, -1.0), ExtReal::PosInf);
    }

    #[test]
    fn perspective_objective_honors_the_convention() {
        let inst = single_coordinate();
        // x = 0, y = 0 is fine, value 0.
        let v = perspective_objective_value(&inst, &[0.0], &[0.0], &[1.0]).unwrap();
        assert_eq!(v, ExtReal::Finite(0.0));
        // x = 0, y = 2 triggers the infinity.
        let v = perspective_objective_value(&inst, &[0.0], &[2.0], &[1.0]).unwrap();
        assert_eq!(v, ExtReal::PosInf);
        // x = 1, y = 2 evaluates to the integer optimum.
        let v = perspective_objective_value(&inst, &[1.0], &[2.0], &[1.0]).unwrap();
        let got = v.finite().unwrap();
        assert!((got + 1.0).abs() < 1e-12, "got {got}");
    }
}
