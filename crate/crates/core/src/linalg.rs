//! Dense linear algebra at desk scale: packed symmetric matrices, a cyclic
//! Jacobi eigensolver, and a Cholesky factorization. Matrices here are at
//! most a few hundred rows, so simplicity and determinism win over blocked
//! kernels.

use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::error::Error;
use crate::real::Real;

/// Offset of entry (i, j), i >= j, in a packed lower triangle stored
/// column-major: column j occupies `j*n - j*(j-1)/2 .. +(n-j)`.
#[inline]
pub(crate) fn tri_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i >= j && i < n);
    j * (2 * n - j + 1) / 2 + (i - j)
}

/// Length of a packed triangle for an `n` x `n` symmetric matrix.
#[inline]
pub fn tri_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Symmetric matrix with single storage of the lower triangle, so
/// `entry(i, j) == entry(j, i)` holds exactly by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T> {
    n: usize,
    tri: Vec<T>,
}

impl<T: Real> SymMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        SymMatrix { n, tri: vec![T::zero(); tri_len(n)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Builds from square rows, rejecting non-square shapes, non-finite
    /// entries, and any asymmetry (entries must match exactly).
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, Error> {
        let n = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Shape(format!(
                    "row {i} has length {}, expected {n}",
                    row.len()
                )));
            }
        }
        for i in 0..n {
            for j in 0..i {
                if rows[i][j] != rows[j][i] {
                    return Err(Error::Shape(format!(
                        "matrix not symmetric at ({i}, {j}): {} vs {}",
                        rows[i][j], rows[j][i]
                    )));
                }
            }
        }
        let mut m = SymMatrix::zeros(n);
        for j in 0..n {
            for i in j..n {
                if !rows[i][j].is_finite() {
                    return Err(Error::Shape(format!("non-finite entry at ({i}, {j})")));
                }
                m.set(i, j, rows[i][j]);
            }
        }
        Ok(m)
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = SymMatrix::zeros(n);
        for j in 0..n {
            for i in j..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn from_diag(d: &[T]) -> Self {
        let mut m = SymMatrix::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> T {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        self.tri[tri_index(self.n, i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        self.tri[tri_index(self.n, i, j)] = v;
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.entry(i, j)).collect())
            .collect()
    }

    pub fn max_abs(&self) -> T {
        self.tri.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    /// Frobenius norm, counting both halves of the off-diagonal.
    pub fn frobenius_norm(&self) -> T {
        let mut acc = T::zero();
        for i in 0..self.n {
            for j in 0..self.n {
                let v = self.entry(i, j);
                acc = acc + v * v;
            }
        }
        acc.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tri.iter().all(|v| v.is_finite())
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.n).map(|i| self.entry(i, i)).collect()
    }

    pub fn row_is_zero(&self, i: usize) -> bool {
        (0..self.n).all(|j| self.entry(i, j) == T::zero())
    }

    /// x' M x.
    pub fn quad_form(&self, x: &[T]) -> T {
        debug_assert_eq!(x.len(), self.n);
        let mut acc = T::zero();
        for i in 0..self.n {
            acc = acc + self.entry(i, i) * x[i] * x[i];
            for j in 0..i {
                acc = acc + T::of(2.0) * self.entry(i, j) * x[i] * x[j];
            }
        }
        acc
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.entry(i, j) * x[j]).sum())
            .collect()
    }

    /// self - diag(d), leaving self untouched.
    pub fn minus_diag(&self, d: &[T]) -> SymMatrix<T> {
        debug_assert_eq!(d.len(), self.n);
        let mut out = self.clone();
        for i in 0..self.n {
            out.set(i, i, out.entry(i, i) - d[i]);
        }
        out
    }
}

/// Serialized as the full square matrix, row-major, so payloads read
/// naturally downstream of the CLI.
impl<T: Real + Serialize> Serialize for SymMatrix<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.n))?;
        for i in 0..self.n {
            let row: Vec<T> = (0..self.n).map(|j| self.entry(i, j)).collect();
            seq.serialize_element(&row)?;
        }
        seq.end()
    }
}

/// Dense row-major matrix, used for constraint matrices and eigenvector
/// bundles.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn add_at(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = self.data[r * self.cols + c] + v;
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// out = A x.
    pub fn matvec(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for r in 0..self.rows {
            out[r] = dot(self.row(r), x);
        }
    }

    /// out = A' x.
    pub fn tr_matvec(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for v in out.iter_mut() {
            *v = T::zero();
        }
        for r in 0..self.rows {
            let xr = x[r];
            if xr == T::zero() {
                continue;
            }
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, &a) in out.iter_mut().zip(row) {
                *o = *o + a * xr;
            }
        }
    }
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub(crate) fn norm_inf<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
}

/// Symmetric eigendecomposition by cyclic Jacobi sweeps. Returns
/// eigenvalues (ascending) and the matrix whose columns are the matching
/// orthonormal eigenvectors. Errors on non-finite input; convergence to
/// machine precision takes a handful of sweeps at these sizes.
pub fn sym_eigen<T: Real>(m: &SymMatrix<T>) -> Result<(Vec<T>, Mat<T>), Error> {
    if !m.is_finite() {
        return Err(Error::NonFinite("eigendecomposition input"));
    }
    let n = m.dim();
    if n == 0 {
        return Ok((Vec::new(), Mat::zeros(0, 0)));
    }
    // Dense working copy, both triangles.
    let mut a = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = m.entry(i, j);
        }
    }
    let mut v = Mat::identity(n);
    let frob = {
        let mut s = T::zero();
        for &x in &a {
            s = s + x * x;
        }
        s.sqrt()
    };
    let tol = T::epsilon() * frob.max(T::one());

    const MAX_SWEEPS: usize = 64;
    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off = off + a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= tol * T::of(1e-3) {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (T::of(2.0) * apq);
                // tan of the rotation angle, the root smaller in magnitude.
                let t = {
                    let denom = theta.abs() + (T::one() + theta * theta).sqrt();
                    if theta >= T::zero() {
                        (denom).recip()
                    } else {
                        -(denom).recip()
                    }
                };
                let c = (T::one() + t * t).sqrt().recip();
                let s = t * c;

                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v.at(k, p);
                    let vkq = v.at(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[i * n + i].partial_cmp(&a[j * n + j]).expect("finite eigenvalues")
    });
    let eigvals: Vec<T> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut eigvecs = Mat::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for r in 0..n {
            eigvecs.set(r, col, v.at(r, src));
        }
    }
    Ok((eigvals, eigvecs))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue<T: Real>(m: &SymMatrix<T>) -> Result<T, Error> {
    let (vals, _) = sym_eigen(m)?;
    Ok(vals.first().copied().unwrap_or_else(T::zero))
}

/// Cholesky factor of a symmetric positive definite matrix, kept for
/// repeated right-hand-side solves.
pub(crate) struct Cholesky<T> {
    n: usize,
    l: Vec<T>,
}

impl<T: Real> Cholesky<T> {
    /// Factors the dense symmetric matrix given row-major. Fails when a
    /// pivot is not strictly positive.
    pub fn factor(n: usize, m: &[T]) -> Result<Self, Error> {
        debug_assert_eq!(m.len(), n * n);
        let mut l = vec![T::zero(); n * n];
        for j in 0..n {
            let mut d = m[j * n + j];
            for k in 0..j {
                d = d - l[j * n + k] * l[j * n + k];
            }
            if d <= T::zero() || !d.is_finite() {
                return Err(Error::Numeric(format!(
                    "Cholesky pivot {j} not positive: {d}"
                )));
            }
            let dj = d.sqrt();
            l[j * n + j] = dj;
            for i in (j + 1)..n {
                let mut s = m[i * n + j];
                for k in 0..j {
                    s = s - l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / dj;
            }
        }
        Ok(Cholesky { n, l })
    }

    /// Solves M x = b in place.
    pub fn solve(&self, b: &mut [T]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s = s - self.l[i * n + k] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s = s - self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tri_indexing_round_trips() {
        let n = 5;
        let mut seen = vec![false; tri_len(n)];
        for j in 0..n {
            for i in j..n {
                let k = tri_index(n, i, j);
                assert!(!seen[k]);
                seen[k] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn symmetry_is_structural() {
        let mut m = SymMatrix::<f64>::zeros(3);
        m.set(2, 0, 7.5);
        assert_eq!(m.entry(0, 2), 7.5);
        assert_eq!(m.entry(2, 0), 7.5);
    }

    #[test]
    fn from_rows_rejects_asymmetry() {
        let rows = vec![vec![1.0, 2.0], vec![2.0 + 1e-12, 3.0]];
        assert!(SymMatrix::from_rows(&rows).is_err());
    }

    #[test]
    fn eigen_of_known_matrix() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let m = SymMatrix::<f64>::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let (vals, vecs) = sym_eigen(&m).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
        // Reconstruction.
        for i in 0..2 {
            for j in 0..2 {
                let mut r = 0.0;
                for k in 0..2 {
                    r += vecs.at(i, k) * vals[k] * vecs.at(j, k);
                }
                assert!((r - m.entry(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn eigen_rejects_non_finite() {
        let mut m = SymMatrix::<f64>::zeros(2);
        m.set(0, 0, f64::NAN);
        assert!(sym_eigen(&m).is_err());
    }

    #[test]
    fn eigen_reconstructs_random_matrix() {
        let mut state = 42u64;
        let mut next = move || {
            state = state.wrapping_add(0x9E3779B97F4A7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
            ((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let n = 9;
        let m = SymMatrix::from_fn(n, |_, _| next() * 4.0);
        let (vals, vecs) = sym_eigen(&m).unwrap();
        let mut max_err = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let mut r = 0.0;
                for k in 0..n {
                    r += vecs.at(i, k) * vals[k] * vecs.at(j, k);
                }
                max_err = max_err.max((r - m.entry(i, j)).abs());
            }
        }
        assert!(max_err < 1e-12, "reconstruction error {max_err}");
        // Orthonormality of eigenvectors.
        for a in 0..n {
            for b in 0..n {
                let mut d = 0.0;
                for k in 0..n {
                    d += vecs.at(k, a) * vecs.at(k, b);
                }
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_solves_spd_system() {
        // M = L L' with L = [[2,0],[1,3]] -> M = [[4,2],[2,10]].
        let m: [f64; 4] = [4.0, 2.0, 2.0, 10.0];
        let chol = Cholesky::factor(2, &m).unwrap();
        let mut b = vec![10.6, 26.0];
        chol.solve(&mut b);
        // Solution of [[4,2],[2,10]] x = (10.6, 26) is x = (1.5, 2.3).
        assert!((b[0] - 1.5).abs() < 1e-12);
        assert!((b[1] - 2.3).abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m: [f64; 4] = [1.0, 2.0, 2.0, 1.0];
        assert!(Cholesky::factor(2, &m).is_err());
    }
}
