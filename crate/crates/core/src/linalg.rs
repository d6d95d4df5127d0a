//! Small dense symmetric-matrix helpers on top of `nalgebra`.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Row-major flat storage to matrix.
pub fn from_flat(d: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(d, d, data)
}

pub fn to_flat(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Symmetrized copy `(M + Mᵀ)/2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let s = symmetrize(m);
    if s.nrows() == 1 {
        return s[(0, 0)];
    }
    s.symmetric_eigenvalues().min()
}

/// `M^{-1/2}` for a symmetric positive definite `M`, through the
/// eigendecomposition `M = V Λ Vᵀ`.
pub fn inv_sqrt_spd(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let s = symmetrize(m);
    let eig = s.symmetric_eigen();
    let lmin = eig.eigenvalues.min();
    if !(lmin > tol) {
        return Err(Error::Nondegenerate(format!(
            "matrix not positive definite (min eigenvalue {lmin:e} <= {tol:e})"
        )));
    }
    let d = m.nrows();
    let mut scaled = eig.eigenvectors.clone();
    for j in 0..d {
        let f = 1.0 / eig.eigenvalues[j].sqrt();
        for i in 0..d {
            scaled[(i, j)] *= f;
        }
    }
    Ok(&scaled * eig.eigenvectors.transpose())
}

/// Inverse of a symmetric matrix whose smallest eigenvalue must exceed `tol`.
pub fn inverse_spd(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let s = symmetrize(m);
    let lmin = min_eigenvalue(&s);
    if !(lmin > tol) {
        return Err(Error::Nondegenerate(format!(
            "matrix singular within tolerance (min eigenvalue {lmin:e} <= {tol:e})"
        )));
    }
    s.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Nondegenerate("Cholesky factorization failed".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_square_root_reconstructs_identity() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]);
        let r = inv_sqrt_spd(&m, 1e-12).unwrap();
        let id = &r * &m * &r;
        assert!((id - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn singular_matrix_is_refused() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(inverse_spd(&m, 1e-8), Err(Error::Nondegenerate(_))));
        assert!(inv_sqrt_spd(&m, 1e-8).is_err());
    }
}
