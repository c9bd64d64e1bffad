//! Cone definitions and Euclidean projections.
//!
//! Symmetric matrix blocks travel through programs as scaled lower
//! triangles: diagonal entries as-is, off-diagonals multiplied by sqrt(2),
//! column-major. With that packing the vector inner product of two packed
//! triangles equals the Frobenius inner product of the matrices.

use crate::error::Error;
use crate::linalg::{sym_eigen, tri_len, Mat, SymMatrix};
use crate::real::Real;

/// One cone block of a conic program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Cone {
    /// {0}^m: equality rows.
    Zero(usize),
    /// Componentwise nonnegative orthant.
    NonNeg(usize),
    /// Rotated quadratic cone {(u, v, w): 2uv >= |w|^2, u >= 0, v >= 0},
    /// total dimension m >= 3.
    RotatedQuad(usize),
    /// Positive semidefinite matrices of side k, packed as a scaled lower
    /// triangle of length k(k+1)/2.
    PsdTriangle(usize),
}

impl Cone {
    /// Length of the slack segment this cone occupies.
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(m) | Cone::NonNeg(m) | Cone::RotatedQuad(m) => m,
            Cone::PsdTriangle(k) => tri_len(k),
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        match *self {
            Cone::Zero(m) | Cone::NonNeg(m) if m >= 1 => Ok(()),
            Cone::RotatedQuad(m) if m >= 3 => Ok(()),
            Cone::PsdTriangle(k) if k >= 1 => Ok(()),
            _ => Err(Error::InvalidArgument(format!("degenerate cone {self:?}"))),
        }
    }
}

/// Packs a symmetric matrix into the scaled-triangle vector.
pub fn svec_pack<T: Real>(m: &SymMatrix<T>) -> Vec<T> {
    let k = m.dim();
    let s2 = T::of(2.0).sqrt();
    let mut out = Vec::with_capacity(tri_len(k));
    for j in 0..k {
        for i in j..k {
            let v = m.entry(i, j);
            out.push(if i == j { v } else { s2 * v });
        }
    }
    out
}

/// Inverse of [`svec_pack`].
pub fn svec_unpack<T: Real>(v: &[T], k: usize) -> SymMatrix<T> {
    debug_assert_eq!(v.len(), tri_len(k));
    let inv_s2 = T::of(2.0).sqrt().recip();
    let mut m = SymMatrix::zeros(k);
    let mut idx = 0;
    for j in 0..k {
        for i in j..k {
            let x = v[idx];
            m.set(i, j, if i == j { x } else { x * inv_s2 });
            idx += 1;
        }
    }
    m
}

/// Position of matrix entry (i, j), i >= j, inside the packed triangle of a
/// side-k block.
#[inline]
pub fn svec_index(k: usize, i: usize, j: usize) -> usize {
    debug_assert!(i >= j && i < k);
    j * (2 * k - j + 1) / 2 + (i - j)
}

/// Frobenius-nearest positive semidefinite matrix: eigendecompose, clamp
/// negative eigenvalues to zero, reassemble.
pub fn project_psd<T: Real>(m: &SymMatrix<T>) -> Result<SymMatrix<T>, Error> {
    let (vals, vecs) = sym_eigen(m)?;
    let k = m.dim();
    if vals.first().map_or(true, |&v| v >= T::zero()) {
        return Ok(m.clone());
    }
    Ok(reassemble_clamped(&vals, &vecs, k))
}

fn reassemble_clamped<T: Real>(vals: &[T], vecs: &Mat<T>, k: usize) -> SymMatrix<T> {
    SymMatrix::from_fn(k, |i, j| {
        let mut acc = T::zero();
        for (c, &lambda) in vals.iter().enumerate() {
            if lambda > T::zero() {
                acc = acc + lambda * vecs.at(i, c) * vecs.at(j, c);
            }
        }
        acc
    })
}

/// Projection onto the standard second-order cone {(t, x): t >= |x|},
/// writing through `out` with the same (t, x) layout.
fn project_soc<T: Real>(t: T, x: &[T], out: &mut [T]) {
    let r = crate::linalg::norm2(x);
    if t >= r {
        out[0] = t;
        out[1..].copy_from_slice(x);
    } else if t <= -r {
        for o in out.iter_mut() {
            *o = T::zero();
        }
    } else {
        let beta = (t + r) / T::of(2.0);
        out[0] = beta;
        let scale = beta / r;
        for (o, &xi) in out[1..].iter_mut().zip(x) {
            *o = scale * xi;
        }
    }
}

/// Projection onto the rotated quadratic cone, via the orthogonal change of
/// variables (u, v, w) -> ((u+v)/sqrt2, (u-v)/sqrt2, w) that maps it onto
/// the standard second-order cone.
fn project_rotated<T: Real>(v: &[T]) -> Vec<T> {
    let s2 = T::of(2.0).sqrt();
    let (u, vv, w) = (v[0], v[1], &v[2..]);
    // Members stay exactly fixed; the rotation round trip below costs a ulp.
    let wsq: T = w.iter().map(|&x| x * x).sum();
    if u >= T::zero() && vv >= T::zero() && T::of(2.0) * u * vv >= wsq {
        return v.to_vec();
    }
    let t = (u + vv) / s2;
    let p = (u - vv) / s2;
    let mut soc_in = Vec::with_capacity(v.len() - 1);
    soc_in.push(p);
    soc_in.extend_from_slice(w);
    let mut soc_out = vec![T::zero(); v.len()];
    project_soc(t, &soc_in, &mut soc_out[..]);
    let (tp, pp) = (soc_out[0], soc_out[1]);
    let mut out = Vec::with_capacity(v.len());
    out.push((tp + pp) / s2);
    out.push((tp - pp) / s2);
    out.extend_from_slice(&soc_out[2..]);
    out
}

/// Euclidean projection of `v` onto the cone. The slice length must match
/// the cone dimension.
pub fn project_cone<T: Real>(v: &[T], cone: &Cone) -> Result<Vec<T>, Error> {
    if v.len() != cone.dim() {
        return Err(Error::Shape(format!(
            "projection input has length {}, cone {cone:?} needs {}",
            v.len(),
            cone.dim()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("cone projection input"));
    }
    Ok(match cone {
        Cone::Zero(_) => vec![T::zero(); v.len()],
        Cone::NonNeg(_) => v.iter().map(|&x| x.max(T::zero())).collect(),
        Cone::RotatedQuad(_) => project_rotated(v),
        Cone::PsdTriangle(k) => svec_pack(&project_psd(&svec_unpack(v, *k))?),
    })
}

/// Projection onto the dual cone. Every cone here is self-dual except
/// Zero, whose dual is the full space.
pub fn project_dual_cone<T: Real>(v: &[T], cone: &Cone) -> Result<Vec<T>, Error> {
    match cone {
        Cone::Zero(_) => {
            if v.len() != cone.dim() {
                return Err(Error::Shape("dual projection length mismatch".into()));
            }
            Ok(v.to_vec())
        }
        _ => project_cone(v, cone),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cone_dims() {
        assert_eq!(Cone::Zero(4).dim(), 4);
        assert_eq!(Cone::NonNeg(2).dim(), 2);
        assert_eq!(Cone::RotatedQuad(5).dim(), 5);
        assert_eq!(Cone::PsdTriangle(3).dim(), 6);
    }

    #[test]
    fn rotated_cone_narrower_than_three_is_rejected() {
        assert!(Cone::RotatedQuad(2).validate().is_err());
        assert!(Cone::RotatedQuad(3).validate().is_ok());
    }

    #[test]
    fn packing_preserves_inner_products() {
        let a = SymMatrix::from_rows(&[
            vec![1.0, 2.0, -1.0],
            vec![2.0, 0.5, 3.0],
            vec![-1.0, 3.0, 2.0],
        ])
        .unwrap();
        let b = SymMatrix::from_rows(&[
            vec![0.5, -1.0, 2.0],
            vec![-1.0, 1.5, 0.0],
            vec![2.0, 0.0, -2.0],
        ])
        .unwrap();
        let frob: f64 = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| a.entry(i, j) * b.entry(i, j))
            .sum();
        let packed = crate::linalg::dot(&svec_pack(&a), &svec_pack(&b));
        assert!((frob - packed).abs() < 1e-12);
        // Round trip.
        assert_eq!(svec_unpack(&svec_pack(&a), 3), a);
    }

    #[test]
    fn psd_projection_of_known_indefinite_matrix() {
        // [[0,1],[1,0]] has eigenvalues +-1; clamping gives [[0.5,0.5],[0.5,0.5]].
        let m = SymMatrix::<f64>::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let p = project_psd(&m).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((p.entry(i, j) - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn psd_projection_fixes_psd_input() {
        let m = SymMatrix::<f64>::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let p = project_psd(&m).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((p.entry(i, j) - m.entry(i, j)).abs() < 1e-12 * m.max_abs());
            }
        }
    }

    #[test]
    fn rotated_projection_of_axis_point() {
        // Frozen from the independent oracle in tests/conic_props.rs
        // (direct minimization of |x - v| over the cone): the projection of
        // (0, 0, 1) lands at (sqrt(2)/4, sqrt(2)/4, 1/2).
        let p = project_cone(&[0.0, 0.0, 1.0], &Cone::RotatedQuad(3)).unwrap();
        let q = 2.0f64.sqrt() / 4.0;
        assert!((p[0] - q).abs() < 1e-12, "{p:?}");
        assert!((p[1] - q).abs() < 1e-12);
        assert!((p[2] - 0.5).abs() < 1e-12);
        // Membership and idempotence.
        assert!(2.0 * p[0] * p[1] >= p[2] * p[2] - 1e-15);
        let pp = project_cone(&p, &Cone::RotatedQuad(3)).unwrap();
        for (a, b) in p.iter().zip(&pp) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn interior_points_are_fixed() {
        let v = vec![2.0, 3.0, 1.0, -1.0];
        let p = project_cone(&v, &Cone::RotatedQuad(4)).unwrap();
        assert_eq!(v, p);
    }

    #[test]
    fn zero_cone_projects_to_origin_and_dual_is_free() {
        let v = vec![1.0, -2.0];
        assert_eq!(project_cone(&v, &Cone::Zero(2)).unwrap(), vec![0.0, 0.0]);
        assert_eq!(project_dual_cone(&v, &Cone::Zero(2)).unwrap(), v);
    }

    #[test]
    fn projection_rejects_bad_lengths_and_nan() {
        assert!(project_cone(&[1.0, 2.0], &Cone::RotatedQuad(3)).is_err());
        assert!(project_cone(&[f64::NAN], &Cone::NonNeg(1)).is_err());
    }
}
