//! ADMM iteration for conic programs.
//!
//! The splitting solves, per iteration, one quasi-definite linear system
//! with a fixed factorization and one projection onto the cone product:
//!
//! ```text
//! (sigma I + A' diag(rho) A) x~ = sigma x - c + A'(rho (h - s) + y)
//! s~ = h - A x~
//! x  <- alpha x~ + (1 - alpha) x
//! v  = alpha s~ + (1 - alpha) s + y / rho
//! s  <- proj_K(v)
//! y  <- rho (v - s)
//! ```
//!
//! At a fixed point, x is primal optimal and w = -y is dual optimal for
//!
//! ```text
//! min c'z  s.t.  h - A z in K      max -h'w  s.t.  c + A'w = 0, w in K*.
//! ```
//!
//! Termination always evaluates residuals on the unscaled data. Equality
//! rows carry a stiffer penalty, and the global penalty adapts to the
//! primal/dual residual ratio on a fixed deterministic schedule (each
//! update refactors the linear system). Divergence of the one-step iterate
//! differences yields Farkas-type infeasibility certificates.

use crate::error::Error;
use crate::linalg::{dot, norm2, norm_inf, Cholesky, Mat};
use crate::real::Real;

use super::cones::{project_cone, project_dual_cone, Cone};
use super::{ConicProgram, ConicSolution, Residuals, SolveStatus, SolverSettings};

/// Extra penalty weight on Zero-cone (equality) rows.
const RHO_EQ_FACTOR: f64 = 1e3;
/// Tikhonov regularization of the variable block; cancels exactly at any
/// fixed point of the iteration.
const SIGMA: f64 = 1e-6;
/// Residual evaluation cadence, in iterations.
const CHECK_EVERY: usize = 25;
/// Penalty adaptation cadence; a multiple of CHECK_EVERY.
const ADAPT_EVERY: usize = 100;
/// Relative tolerance of the infeasibility certificate tests.
const EPS_INF: f64 = 1e-6;
/// Equilibration passes.
const RUIZ_PASSES: usize = 10;

struct Scaling<T> {
    /// Column scaling of A (variable space).
    d: Vec<T>,
    /// Row scaling of A (constraint space), uniform inside non-polyhedral
    /// cone blocks so scaled slacks stay in their cones.
    e: Vec<T>,
}

fn ruiz_equilibrate<T: Real>(a: &Mat<T>, cones: &[Cone]) -> Scaling<T> {
    let (m, n) = (a.rows(), a.cols());
    let mut d = vec![T::one(); n];
    let mut e = vec![T::one(); m];
    let tiny = T::of(1e-30);
    // (start row, dim, scale uniformly) per cone block.
    let mut blocks = Vec::with_capacity(cones.len());
    let mut row = 0;
    for cone in cones {
        let uniform = matches!(cone, Cone::RotatedQuad(_) | Cone::PsdTriangle(_));
        blocks.push((row, cone.dim(), uniform));
        row += cone.dim();
    }
    for _ in 0..RUIZ_PASSES {
        let mut rnorm = vec![T::zero(); m];
        for r in 0..m {
            let arow = a.row(r);
            let mut mx = T::zero();
            for j in 0..n {
                mx = mx.max((arow[j] * e[r] * d[j]).abs());
            }
            rnorm[r] = mx;
        }
        for &(start, dim, uniform) in &blocks {
            if uniform {
                let mx = rnorm[start..start + dim]
                    .iter()
                    .fold(T::zero(), |acc, &v| acc.max(v));
                for v in rnorm[start..start + dim].iter_mut() {
                    *v = mx;
                }
            }
        }
        for r in 0..m {
            if rnorm[r] > tiny {
                e[r] = e[r] / rnorm[r].sqrt();
            }
        }
        let mut cnorm = vec![T::zero(); n];
        for r in 0..m {
            let arow = a.row(r);
            for j in 0..n {
                cnorm[j] = cnorm[j].max((arow[j] * e[r] * d[j]).abs());
            }
        }
        for j in 0..n {
            if cnorm[j] > tiny {
                d[j] = d[j] / cnorm[j].sqrt();
            }
        }
    }
    Scaling { d, e }
}

/// Builds sigma I + A' diag(row_rho) A and factors it.
fn factor_normal_matrix<T: Real>(
    a: &Mat<T>,
    row_rho: &[T],
    sigma: T,
) -> Result<Cholesky<T>, Error> {
    let n = a.cols();
    let mut mdat = vec![T::zero(); n * n];
    for r in 0..a.rows() {
        let arow = a.row(r);
        let w = row_rho[r];
        for i in 0..n {
            let ai = arow[i];
            if ai == T::zero() {
                continue;
            }
            let wai = w * ai;
            for j in i..n {
                mdat[i * n + j] = mdat[i * n + j] + wai * arow[j];
            }
        }
    }
    for i in 0..n {
        mdat[i * n + i] = mdat[i * n + i] + sigma;
        for j in 0..i {
            mdat[i * n + j] = mdat[j * n + i];
        }
    }
    Cholesky::factor(n, &mdat)
}

fn block_distance_to_cone<T: Real>(v: &[T], cones: &[Cone], dual: bool) -> Result<T, Error> {
    let mut off = 0;
    let mut acc = T::zero();
    for cone in cones {
        let dim = cone.dim();
        let seg = &v[off..off + dim];
        let proj = if dual {
            project_dual_cone(seg, cone)?
        } else {
            project_cone(seg, cone)?
        };
        for (a, b) in seg.iter().zip(&proj) {
            let diff = *a - *b;
            acc = acc + diff * diff;
        }
        off += dim;
    }
    Ok(acc.sqrt())
}

pub fn solve<T: Real>(
    prog: &ConicProgram<T>,
    settings: &SolverSettings<T>,
) -> Result<ConicSolution<T>, Error> {
    prog.validate()?;
    settings.validate()?;
    let n = prog.num_vars;
    let m = prog.total_cone_dim();
    if n == 0 {
        return Err(Error::InvalidArgument("program has no variables".into()));
    }
    if m == 0 {
        // Unconstrained linear objective: optimal at the origin iff c = 0.
        let zero_c = prog.c.iter().all(|&v| v == T::zero());
        let status = if zero_c { SolveStatus::Optimal } else { SolveStatus::DualInfeasible };
        return Ok(ConicSolution {
            status,
            z: vec![T::zero(); n],
            s: Vec::new(),
            w: Vec::new(),
            objective: if zero_c { prog.obj_offset } else { T::neg_infinity() },
            residuals: Residuals { primal: T::zero(), dual: norm2(&prog.c), gap: T::zero() },
            iterations: 0,
        });
    }

    let scaling = if settings.scaling {
        ruiz_equilibrate(&prog.a, &prog.cones)
    } else {
        Scaling { d: vec![T::one(); n], e: vec![T::one(); m] }
    };

    // Scaled data.
    let mut a_s = Mat::zeros(m, n);
    for r in 0..m {
        for j in 0..n {
            a_s.set(r, j, prog.a.at(r, j) * scaling.e[r] * scaling.d[j]);
        }
    }
    let c_s: Vec<T> = (0..n).map(|j| prog.c[j] * scaling.d[j]).collect();
    let h_s: Vec<T> = (0..m).map(|r| prog.h[r] * scaling.e[r]).collect();

    let sigma = T::of(SIGMA);
    let eq_factor = T::of(RHO_EQ_FACTOR);
    let row_weight: Vec<T> = {
        let mut w = Vec::with_capacity(m);
        for cone in &prog.cones {
            let f = if matches!(cone, Cone::Zero(_)) { eq_factor } else { T::one() };
            w.extend(std::iter::repeat(f).take(cone.dim()));
        }
        w
    };
    let mut rho = settings.rho;
    let mut row_rho: Vec<T> = row_weight.iter().map(|&w| w * rho).collect();
    let mut chol = factor_normal_matrix(&a_s, &row_rho, sigma)?;
    let mut next_adapt = ADAPT_EVERY;

    // Iterates (scaled space).
    let mut x = vec![T::zero(); n];
    let mut s: Vec<T> = {
        let mut out = vec![T::zero(); m];
        let mut off = 0;
        for cone in &prog.cones {
            let dim = cone.dim();
            let proj = project_cone(&h_s[off..off + dim], cone)?;
            out[off..off + dim].copy_from_slice(&proj);
            off += dim;
        }
        out
    };
    let mut y = vec![T::zero(); m];
    let mut x_prev = vec![T::zero(); n];
    let mut y_prev = vec![T::zero(); m];

    // Work buffers.
    let mut rhs = vec![T::zero(); n];
    let mut xt = vec![T::zero(); n];
    let mut tmp_m = vec![T::zero(); m];
    let mut ax = vec![T::zero(); m];
    let mut z_u = vec![T::zero(); n];
    let mut s_u = vec![T::zero(); m];
    let mut w_u = vec![T::zero(); m];
    let mut az_u = vec![T::zero(); m];
    let mut atw_u = vec![T::zero(); n];

    let alpha = settings.alpha;
    let one_minus_alpha = T::one() - alpha;
    let a_max = {
        let mut mx = T::zero();
        for r in 0..m {
            mx = mx.max(norm_inf(prog.a.row(r)));
        }
        mx
    };
    let a_scale_ref = T::one() + a_max;

    let mut status = SolveStatus::IterLimit;
    let mut iterations = settings.max_iters;
    let mut residuals = Residuals {
        primal: T::infinity(),
        dual: T::infinity(),
        gap: T::infinity(),
    };
    let mut certificate: Option<(SolveStatus, Vec<T>)> = None;

    for k in 0..settings.max_iters {
        x_prev.copy_from_slice(&x);
        y_prev.copy_from_slice(&y);

        // Linear step.
        for r in 0..m {
            tmp_m[r] = row_rho[r] * (h_s[r] - s[r]) + y[r];
        }
        a_s.tr_matvec(&tmp_m, &mut rhs);
        for j in 0..n {
            rhs[j] = rhs[j] + sigma * x[j] - c_s[j];
        }
        xt.copy_from_slice(&rhs);
        chol.solve(&mut xt);
        a_s.matvec(&xt, &mut ax);

        // Relaxed updates.
        for j in 0..n {
            x[j] = alpha * xt[j] + one_minus_alpha * x[j];
        }
        let mut diverged = false;
        for r in 0..m {
            // v = alpha s~ + (1 - alpha) s + y / rho, with s~ = h - A x~.
            tmp_m[r] = alpha * (h_s[r] - ax[r]) + one_minus_alpha * s[r] + y[r] / row_rho[r];
            if !tmp_m[r].is_finite() {
                diverged = true;
            }
        }
        if diverged || x.iter().any(|v| !v.is_finite()) {
            iterations = k + 1;
            status = SolveStatus::IterLimit;
            break;
        }
        {
            let mut off = 0;
            for cone in &prog.cones {
                let dim = cone.dim();
                let proj = project_cone(&tmp_m[off..off + dim], cone)?;
                s[off..off + dim].copy_from_slice(&proj);
                off += dim;
            }
        }
        for r in 0..m {
            y[r] = row_rho[r] * (tmp_m[r] - s[r]);
        }

        let checkpoint = (k + 1) % CHECK_EVERY == 0 || k + 1 == settings.max_iters;
        if !checkpoint {
            continue;
        }

        // Unscaled iterates and residuals.
        for j in 0..n {
            z_u[j] = scaling.d[j] * x[j];
        }
        for r in 0..m {
            s_u[r] = s[r] / scaling.e[r];
            w_u[r] = -scaling.e[r] * y[r];
        }
        prog.a.matvec(&z_u, &mut az_u);
        let mut rp_acc = T::zero();
        for r in 0..m {
            let v = az_u[r] + s_u[r] - prog.h[r];
            rp_acc = rp_acc + v * v;
        }
        let rp = rp_acc.sqrt();
        let norm_az = norm2(&az_u);
        let scale_p = norm_az.max(norm2(&s_u)).max(norm2(&prog.h));
        prog.a.tr_matvec(&w_u, &mut atw_u);
        let mut rd_acc = T::zero();
        for j in 0..n {
            let v = prog.c[j] + atw_u[j];
            rd_acc = rd_acc + v * v;
        }
        let rd = rd_acc.sqrt();
        let scale_d = norm2(&prog.c).max(norm2(&atw_u));
        let cz = dot(&prog.c, &z_u);
        let hw = dot(&prog.h, &w_u);
        let gap = (cz + hw).abs();
        let scale_g = cz.abs().max(hw.abs());
        residuals = Residuals { primal: rp, dual: rd, gap };

        let ok_p = rp <= settings.eps_abs + settings.eps_rel * scale_p;
        let ok_d = rd <= settings.eps_abs + settings.eps_rel * scale_d;
        let ok_g = gap <= settings.eps_abs + settings.eps_rel * scale_g;
        if ok_p && ok_d && ok_g {
            status = SolveStatus::Optimal;
            iterations = k + 1;
            break;
        }

        // Infeasibility certificates from one-step differences.
        let eps_inf = T::of(EPS_INF);
        {
            // Primal: candidate multiplier direction wbar = -E (y - y_prev).
            let mut wbar: Vec<T> = (0..m)
                .map(|r| -scaling.e[r] * (y[r] - y_prev[r]))
                .collect();
            let nw = norm2(&wbar);
            if nw > T::of(1e-13) * (T::one() + norm2(&y)) {
                for v in wbar.iter_mut() {
                    *v = *v / nw;
                }
                prog.a.tr_matvec(&wbar, &mut atw_u);
                let stationary = norm2(&atw_u) <= eps_inf * a_scale_ref;
                let support = dot(&prog.h, &wbar);
                let improving = support <= -eps_inf * (T::one() + norm_inf(&prog.h));
                if stationary && improving {
                    let cone_dist = block_distance_to_cone(&wbar, &prog.cones, true)?;
                    if cone_dist <= eps_inf {
                        certificate = Some((SolveStatus::PrimalInfeasible, wbar));
                        iterations = k + 1;
                        break;
                    }
                }
            }
        }
        {
            // Dual: candidate unbounded ray q = D (x - x_prev).
            let mut q: Vec<T> = (0..n)
                .map(|j| scaling.d[j] * (x[j] - x_prev[j]))
                .collect();
            let nq = norm2(&q);
            if nq > T::of(1e-13) * (T::one() + norm2(&x)) {
                for v in q.iter_mut() {
                    *v = *v / nq;
                }
                let descent = dot(&prog.c, &q);
                if descent <= -eps_inf * (T::one() + norm_inf(&prog.c)) {
                    prog.a.matvec(&q, &mut az_u);
                    let neg_aq: Vec<T> = az_u.iter().map(|&v| -v).collect();
                    let dist = block_distance_to_cone(&neg_aq, &prog.cones, false)?;
                    if dist <= eps_inf * (T::one() + norm2(&neg_aq)) {
                        certificate = Some((SolveStatus::DualInfeasible, q));
                        iterations = k + 1;
                        break;
                    }
                }
            }
        }

        // Deterministic penalty adaptation. Each accepted change doubles the
        // earliest iteration at which the next change may fire, so changes are
        // geometrically spaced and the iteration eventually runs at fixed rho
        // (unbounded retuning can orbit a limit cycle instead of converging).
        if (k + 1) % ADAPT_EVERY == 0 && k + 1 >= next_adapt {
            let tiny = T::of(1e-30);
            let rel_p = rp / scale_p.max(settings.eps_abs);
            let rel_d = rd / scale_d.max(settings.eps_abs);
            let ratio = rel_p.max(tiny) / rel_d.max(tiny);
            if ratio > T::of(10.0) || ratio < T::of(0.1) {
                let factor = ratio.sqrt().max(T::of(1e-3)).min(T::of(1e3));
                let new_rho = (rho * factor).max(T::of(1e-6)).min(T::of(1e6));
                if new_rho != rho {
                    rho = new_rho;
                    for (rr, &wt) in row_rho.iter_mut().zip(&row_weight) {
                        *rr = wt * rho;
                    }
                    chol = factor_normal_matrix(&a_s, &row_rho, sigma)?;
                    next_adapt = (k + 1).saturating_mul(2);
                }
            }
        }
    }

    // Final unscaled packaging.
    for j in 0..n {
        z_u[j] = scaling.d[j] * x[j];
    }
    for r in 0..m {
        s_u[r] = s[r] / scaling.e[r];
        w_u[r] = -scaling.e[r] * y[r];
    }
    let mut objective = dot(&prog.c, &z_u) + prog.obj_offset;
    match &certificate {
        Some((SolveStatus::PrimalInfeasible, cert)) => {
            status = SolveStatus::PrimalInfeasible;
            w_u.copy_from_slice(cert);
            objective = T::infinity();
        }
        Some((SolveStatus::DualInfeasible, cert)) => {
            status = SolveStatus::DualInfeasible;
            z_u.copy_from_slice(cert);
            objective = T::neg_infinity();
        }
        _ => {}
    }
    Ok(ConicSolution {
        status,
        z: z_u,
        s: s_u,
        w: w_u,
        objective,
        residuals,
        iterations,
    })
}
