//! Dense complex linear algebra helpers shared by the rest of the crate.
//!
//! Everything here works on `nalgebra` dynamic matrices over `Complex64`.
//! Rank and null-space decisions all go through [`RankPolicy`], which compares
//! singular values against a threshold relative to the largest one.

use nalgebra::{DMatrix, DVector, Schur, SVD};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// Relative singular-value threshold used for numerical rank decisions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankPolicy {
    pub relative: f64,
}

impl Default for RankPolicy {
    fn default() -> Self {
        Self { relative: 1e-9 }
    }
}

impl RankPolicy {
    pub fn new(relative: f64) -> Self {
        Self { relative }
    }

    /// Absolute cutoff for a descending list of singular values.
    pub fn cutoff(&self, singular_values: &[f64]) -> f64 {
        let largest = singular_values.first().copied().unwrap_or(0.0);
        self.relative * largest
    }

    pub fn rank(&self, m: &CMat) -> usize {
        let sv = singular_values(m);
        let cut = self.cutoff(&sv);
        if sv.first().copied().unwrap_or(0.0) == 0.0 {
            return 0;
        }
        sv.iter().filter(|&&s| s > cut).count()
    }
}

/// Singular values in descending order.
pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let svd = SVD::new(m.clone(), false, false);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Orthonormal basis of the null space, one column per null vector, together
/// with the full descending singular value list of `m`.
///
/// Wide matrices are padded with zero rows so that the right singular vectors
/// span the whole domain.
pub fn null_space(m: &CMat, policy: RankPolicy) -> (CMat, Vec<f64>) {
    let n = m.ncols();
    if n == 0 {
        return (CMat::zeros(0, 0), Vec::new());
    }
    let padded = if m.nrows() < n {
        let mut p = CMat::zeros(n, n);
        p.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = SVD::new(padded, false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sv: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let cut = policy.cutoff(&sv);
    let largest = sv.first().copied().unwrap_or(0.0);
    let null: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| largest == 0.0 || svd.singular_values[i] <= cut)
        .collect();
    let mut basis = CMat::zeros(n, null.len());
    for (k, &i) in null.iter().enumerate() {
        for r in 0..n {
            basis[(r, k)] = v_t[(i, r)].conj();
        }
    }
    (basis, sv)
}

/// Orthonormal basis for the column span of `m` (modified Gram-Schmidt with
/// re-orthogonalization). Columns whose residual norm falls to `abs_tol` or
/// below are dropped.
pub fn orthonormal_columns(m: &CMat, abs_tol: f64) -> CMat {
    let mut out: Vec<CVec> = Vec::new();
    for j in 0..m.ncols() {
        let mut v: CVec = m.column(j).into_owned();
        let scale = v.norm();
        if scale == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for q in &out {
                let proj = q.dotc(&v);
                v -= q * proj;
            }
        }
        let nv = v.norm();
        if nv > abs_tol {
            out.push(v / Complex64::from(nv));
        }
    }
    let mut basis = CMat::zeros(m.nrows(), out.len());
    for (k, q) in out.iter().enumerate() {
        basis.set_column(k, q);
    }
    basis
}

pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()) * Complex64::from(0.5)
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn hermitian_deviation(m: &CMat) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = eigenvalues(&hermitize(m)).iter().map(|z| z.re).collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// All eigenvalues of a square complex matrix, read off the diagonal of its
/// complex Schur form.
pub fn eigenvalues(m: &CMat) -> Vec<Complex64> {
    let n = m.nrows();
    match n {
        0 => Vec::new(),
        1 => vec![m[(0, 0)]],
        _ => {
            let (_, t) = Schur::new(m.clone()).unpack();
            (0..n).map(|i| t[(i, i)]).collect()
        }
    }
}

pub fn spectral_radius(m: &CMat) -> f64 {
    eigenvalues(m).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn trace(m: &CMat) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Column-major vectorization; matches `vec(A X B) = (Bᵀ ⊗ A) vec(X)`.
pub fn vec_of(m: &CMat) -> CVec {
    CVec::from_iterator(m.len(), m.iter().copied())
}

pub fn unvec(v: &[Complex64], rows: usize, cols: usize) -> CMat {
    CMat::from_column_slice(rows, cols, v)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn null_space_of_wide_matrix() {
        // one equation, three unknowns
        let m = CMat::from_row_slice(1, 3, &[c(1.0, 0.0), c(0.0, 1.0), c(2.0, 0.0)]);
        let (basis, _) = null_space(&m, RankPolicy::default());
        assert_eq!(basis.ncols(), 2);
        let prod = &m * &basis;
        assert!(max_abs(&prod) < 1e-12);
    }

    #[test]
    fn rank_of_outer_product() {
        let u = CVec::from_vec(vec![c(1.0, 1.0), c(2.0, 0.0), c(0.0, -1.0)]);
        let m = &u * u.adjoint();
        assert_eq!(RankPolicy::default().rank(&m), 1);
        assert_eq!(RankPolicy::default().rank(&CMat::zeros(3, 3)), 0);
    }

    #[test]
    fn complex_schur_eigenvalues() {
        // rotation by 90 degrees has eigenvalues ±i
        let m = CMat::from_row_slice(2, 2, &[ZERO, c(-1.0, 0.0), ONE, ZERO]);
        let mut ev = eigenvalues(&m);
        ev.sort_by(|a, b| a.im.total_cmp(&b.im));
        assert!((ev[0] - c(0.0, -1.0)).norm() < 1e-12);
        assert!((ev[1] - c(0.0, 1.0)).norm() < 1e-12);

        let m3 = CMat::from_row_slice(
            3,
            3,
            &[c(2.0, 1.0), c(1.0, 0.0), ZERO, ZERO, c(-1.0, 0.5), c(3.0, 0.0), ZERO, ZERO, c(0.5, 0.0)],
        );
        let mut ev = eigenvalues(&m3);
        ev.sort_by(|a, b| a.re.total_cmp(&b.re));
        assert!((ev[0] - c(-1.0, 0.5)).norm() < 1e-10);
        assert!((ev[2] - c(2.0, 1.0)).norm() < 1e-10);
    }

    #[test]
    fn vec_identity_matches_kronecker() {
        let a = CMat::from_fn(2, 3, |i, j| c(i as f64 + 1.0, j as f64));
        let x = CMat::from_fn(3, 2, |i, j| c(j as f64 - i as f64, 1.0));
        let b = CMat::from_fn(2, 2, |i, j| c((i * j) as f64, 0.5));
        let lhs = vec_of(&(&a * &x * &b));
        let rhs = kron(&b.transpose(), &a) * vec_of(&x);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn orthonormal_columns_drops_dependent() {
        let m = CMat::from_row_slice(2, 3, &[ONE, c(2.0, 0.0), ZERO, ZERO, ZERO, ONE]);
        let q = orthonormal_columns(&m, 1e-12);
        assert_eq!(q.ncols(), 2);
        let g = q.adjoint() * &q;
        assert!(max_abs_diff(&g, &CMat::identity(2, 2)) < 1e-12);
    }
}
