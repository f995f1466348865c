//! Dense linear-algebra helpers shared by the synthesis modules.
//!
//! Everything here works on `nalgebra` dynamic matrices. Square roots of
//! symmetric PSD matrices use the symmetric eigendecomposition with clamped
//! eigenvalues; indefinite symmetric solves go through [`SymFactor`].

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;
pub type CMat = DMatrix<Complex64>;

/// Relative pivot guard for symmetric indefinite solves.
pub const PIVOT_GUARD: f64 = 1e-12;
/// Eigenvalue threshold used when counting inertia.
pub const INERTIA_TOL: f64 = 1e-10;
/// Margin for strict stability: spectral radius must be below `1 - STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-9;

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry.
pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn is_symmetric(m: &Mat, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = max_abs(m).max(1.0);
    max_abs(&(m - m.transpose())) <= rel_tol * scale
}

fn sym_eigen(m: &Mat) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(symmetrize(m))
}

/// Smallest and largest eigenvalue of a symmetric matrix (`(0, 0)` for an empty one).
pub fn eig_extremes(m: &Mat) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let e = sym_eigen(m);
    let lo = e.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = e.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

pub fn max_eig(m: &Mat) -> f64 {
    eig_extremes(m).1
}

pub fn min_eig(m: &Mat) -> f64 {
    eig_extremes(m).0
}

fn rebuild(e: &SymmetricEigen<f64, nalgebra::Dyn>, f: impl Fn(f64) -> f64) -> Mat {
    let v = &e.eigenvectors;
    let d = Vector::from_iterator(e.eigenvalues.len(), e.eigenvalues.iter().map(|&l| f(l)));
    let scaled = v * Mat::from_diagonal(&d);
    symmetrize(&(scaled * v.transpose()))
}

/// Symmetric PSD square root with eigenvalues clamped at zero.
pub fn psd_sqrt(m: &Mat) -> Mat {
    if m.nrows() == 0 {
        return m.clone();
    }
    rebuild(&sym_eigen(m), |l| libm::sqrt(l.max(0.0)))
}

/// Projection onto the PSD cone (negative eigenvalues clamped to zero).
pub fn psd_clamp(m: &Mat) -> Mat {
    if m.nrows() == 0 {
        return m.clone();
    }
    rebuild(&sym_eigen(m), |l| l.max(0.0))
}

/// Inverse symmetric square root of a positive definite matrix.
pub fn pd_inv_sqrt(m: &Mat, what: &'static str) -> Result<Mat> {
    if m.nrows() == 0 {
        return Ok(m.clone());
    }
    let e = sym_eigen(m);
    let lo = e.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if lo <= 1e-12 {
        return Err(Error::NotPositiveDefinite { what, min_eig: lo });
    }
    Ok(rebuild(&e, |l| 1.0 / libm::sqrt(l)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

/// Counts eigenvalues above `tol`, below `-tol` and in between.
pub fn inertia(m: &Mat, tol: f64) -> Inertia {
    if m.nrows() == 0 {
        return Inertia::default();
    }
    let mut out = Inertia::default();
    for &l in sym_eigen(m).eigenvalues.iter() {
        if l > tol {
            out.positive += 1;
        } else if l < -tol {
            out.negative += 1;
        } else {
            out.zero += 1;
        }
    }
    out
}

/// Eigenvalues of a general real square matrix via the real Schur form.
pub fn eigenvalues(m: &Mat) -> Result<Vec<Complex64>> {
    if !m.is_square() {
        return Err(Error::Dimension("eigenvalues of a non-square matrix".into()));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Numeric("Schur decomposition did not converge".into()))?;
    Ok(schur.complex_eigenvalues().iter().cloned().collect())
}

pub fn spectral_radius(m: &Mat) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().fold(0.0_f64, |acc, z| acc.max(z.norm())))
}

pub fn is_schur_stable(m: &Mat) -> Result<bool> {
    Ok(spectral_radius(m)? < 1.0 - STABILITY_MARGIN)
}

/// Eigendecomposition-backed factorization of a symmetric, possibly
/// indefinite matrix. The matrix is first equilibrated by its diagonal
/// (a congruence, so inertia is unchanged); construction fails when the
/// smallest eigenvalue magnitude of the scaled matrix falls below
/// `PIVOT_GUARD` times the largest.
#[derive(Debug, Clone)]
pub struct SymFactor {
    scale: Vector,
    vectors: Mat,
    values: Vector,
}

impl SymFactor {
    pub fn new(m: &Mat) -> Option<Self> {
        let n = m.nrows();
        let scale = Vector::from_iterator(
            n,
            (0..n).map(|i| {
                let d = m[(i, i)].abs();
                if d > 0.0 && d.is_finite() { 1.0 / libm::sqrt(d) } else { 1.0 }
            }),
        );
        let mut scaled = symmetrize(m);
        for i in 0..n {
            for j in 0..n {
                scaled[(i, j)] *= scale[i] * scale[j];
            }
        }
        let e = SymmetricEigen::new(scaled);
        let top = e.eigenvalues.iter().fold(0.0_f64, |a, l| a.max(l.abs()));
        if top == 0.0 && n > 0 {
            return None;
        }
        if e.eigenvalues.iter().any(|l| l.abs() <= PIVOT_GUARD * top || !l.is_finite()) {
            return None;
        }
        Some(Self { scale, vectors: e.eigenvectors, values: e.eigenvalues })
    }

    pub fn solve(&self, rhs: &Mat) -> Mat {
        let mut y = rhs.clone();
        for (i, &d) in self.scale.iter().enumerate() {
            y.row_mut(i).scale_mut(d);
        }
        let mut y = self.vectors.transpose() * y;
        for (i, &l) in self.values.iter().enumerate() {
            y.row_mut(i).scale_mut(1.0 / l);
        }
        let mut x = &self.vectors * y;
        for (i, &d) in self.scale.iter().enumerate() {
            x.row_mut(i).scale_mut(d);
        }
        x
    }

    pub fn inverse(&self) -> Mat {
        let n = self.values.len();
        self.solve(&Mat::identity(n, n))
    }

    /// Inertia of the original matrix, counted on the equilibrated one.
    pub fn inertia(&self) -> Inertia {
        let mut out = Inertia::default();
        for &l in self.values.iter() {
            if l > INERTIA_TOL {
                out.positive += 1;
            } else if l < -INERTIA_TOL {
                out.negative += 1;
            } else {
                out.zero += 1;
            }
        }
        out
    }
}

/// Solves `a x = b` for symmetric positive definite `a` (Cholesky).
pub fn spd_solve(a: &Mat, b: &Mat) -> Result<Mat> {
    let chol = symmetrize(a)
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { what: "system matrix", min_eig: min_eig(a) })?;
    Ok(chol.solve(b))
}

pub fn spd_solve_vec(a: &Mat, b: &Vector) -> Result<Vector> {
    let chol = symmetrize(a)
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { what: "system matrix", min_eig: min_eig(a) })?;
    Ok(chol.solve(b))
}

pub fn hstack(parts: &[&Mat]) -> Mat {
    let rows = parts.first().map_or(0, |m| m.nrows());
    let cols = parts.iter().map(|m| m.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c = 0;
    for p in parts {
        debug_assert_eq!(p.nrows(), rows);
        out.view_mut((0, c), (rows, p.ncols())).copy_from(p);
        c += p.ncols();
    }
    out
}

pub fn vstack(parts: &[&Mat]) -> Mat {
    let cols = parts.first().map_or(0, |m| m.ncols());
    let rows = parts.iter().map(|m| m.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r = 0;
    for p in parts {
        debug_assert_eq!(p.ncols(), cols);
        out.view_mut((r, 0), (p.nrows(), cols)).copy_from(p);
        r += p.nrows();
    }
    out
}

pub fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|v| Complex64::new(v, 0.0))
}

/// Hermitian part of a complex matrix.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// `(z I - a)^{-1} b` for complex `z`.
pub fn resolvent_apply(a: &Mat, z: Complex64, b: &CMat) -> Result<CMat> {
    let n = a.nrows();
    let m = CMat::from_diagonal_element(n, n, z) - to_complex(a);
    m.lu()
        .solve(b)
        .ok_or_else(|| Error::Numeric("z is an eigenvalue of the state matrix".into()))
}

fn min_singular(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// PBH test: `[lambda I - A, B]` has full row rank at every eigenvalue of `A`
/// with modulus at least one.
pub fn is_stabilizable(a: &Mat, b: &Mat, tol: f64) -> Result<bool> {
    let n = a.nrows();
    for lambda in eigenvalues(a)? {
        if lambda.norm() < 1.0 - 1e-12 {
            continue;
        }
        let mut m = CMat::zeros(n, n + b.ncols());
        let shifted = CMat::from_diagonal_element(n, n, lambda) - to_complex(a);
        m.view_mut((0, 0), (n, n)).copy_from(&shifted);
        m.view_mut((0, n), (n, b.ncols())).copy_from(&to_complex(b));
        if min_singular(&m) <= tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// PBH test for detectability of `(A, C)`.
pub fn is_detectable(a: &Mat, c: &Mat, tol: f64) -> Result<bool> {
    is_stabilizable(&a.transpose(), &c.transpose(), tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn radius_of_scaled_identity() {
        let m = Mat::identity(3, 3) * 0.5;
        assert_relative_eq!(spectral_radius(&m).unwrap(), 0.5, epsilon = 1e-14);
        assert!(is_schur_stable(&m).unwrap());
    }

    #[test]
    fn rotation_has_unit_radius() {
        let m = Mat::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert_relative_eq!(spectral_radius(&m).unwrap(), 1.0, epsilon = 1e-12);
        assert!(!is_schur_stable(&m).unwrap());
    }

    #[test]
    fn inertia_of_game_weight() {
        let gamma: f64 = 3.0;
        let r = Mat::from_diagonal(&Vector::from_vec(alloc::vec![1.0, -gamma * gamma]));
        assert_eq!(inertia(&r, INERTIA_TOL), Inertia { positive: 1, negative: 1, zero: 0 });
    }

    #[test]
    fn sqrt_clamps_tiny_negative_eigenvalues() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-14]);
        let s = psd_sqrt(&m);
        assert!(s.iter().all(|v| v.is_finite()));
        assert_relative_eq!(s[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(s[(1, 1)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn sqrt_squares_back() {
        let m = Mat::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let s = psd_sqrt(&m);
        assert_relative_eq!(&s * &s, m, epsilon = 1e-12);
        let is = pd_inv_sqrt(&m, "m").unwrap();
        assert_relative_eq!(&is * &s, Mat::identity(3, 3), epsilon = 1e-12);
    }

    #[test]
    fn sym_factor_rejects_singular() {
        let m = Mat::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(SymFactor::new(&m).is_none());
        let m = Mat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, -3.0]);
        let f = SymFactor::new(&m).unwrap();
        assert_relative_eq!(&m * f.inverse(), Mat::identity(2, 2), epsilon = 1e-12);
        assert_eq!(f.inertia(), Inertia { positive: 1, negative: 1, zero: 0 });
        // widely separated scales are not mistaken for singularity
        let m = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e12]);
        let f = SymFactor::new(&m).unwrap();
        assert_eq!(f.inertia(), Inertia { positive: 1, negative: 1, zero: 0 });
        assert_relative_eq!(f.inverse()[(1, 1)], -1e-12, max_relative = 1e-12);
    }

    #[test]
    fn pbh_tests() {
        // unstable mode at 2 not reachable from b
        let a = Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let b = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(!is_stabilizable(&a, &b, 1e-8).unwrap());
        let b = Mat::from_row_slice(2, 1, &[1.0, 0.0]);
        assert!(is_stabilizable(&a, &b, 1e-8).unwrap());
        let c = Mat::from_row_slice(1, 2, &[0.0, 1.0]);
        assert!(!is_detectable(&a, &c, 1e-8).unwrap());
    }
}
