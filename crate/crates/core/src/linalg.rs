//! Small dense helpers: symmetrization, PD solves and PSD factors.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix2, Matrix3, SymmetricEigen};

use crate::error::{EotError, Result};

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn symmetrize2(m: &Matrix2<f64>) -> Matrix2<f64> {
    (m + m.transpose()) * 0.5
}

pub fn symmetrize3(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

fn spectrum_diagnostics(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(symmetrize(m)).eigenvalues;
    let min = eig.min();
    let max = eig.max();
    let cond = if min.abs() > 0.0 {
        max.abs() / min.abs()
    } else {
        f64::INFINITY
    };
    (min, cond)
}

/// Cholesky factorization of a symmetric positive definite matrix.
pub fn cholesky(m: &DMatrix<f64>, context: &'static str) -> Result<Cholesky<f64, Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(EotError::NotPositiveDefinite {
            context,
            min_eigenvalue: f64::NAN,
            condition: f64::NAN,
        });
    }
    Cholesky::new(symmetrize(m)).ok_or_else(|| {
        let (min_eigenvalue, condition) = spectrum_diagnostics(m);
        EotError::NotPositiveDefinite {
            context,
            min_eigenvalue,
            condition,
        }
    })
}

pub fn spd_solve_vec(
    m: &DMatrix<f64>,
    b: &DVector<f64>,
    context: &'static str,
) -> Result<DVector<f64>> {
    Ok(cholesky(m, context)?.solve(b))
}

pub fn spd_solve_mat(
    m: &DMatrix<f64>,
    b: &DMatrix<f64>,
    context: &'static str,
) -> Result<DMatrix<f64>> {
    Ok(cholesky(m, context)?.solve(b))
}

/// Inverse of an SPD matrix, symmetrized. Only used to turn configured
/// covariances into information matrices once.
pub fn spd_inverse(m: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    Ok(symmetrize(&cholesky(m, context)?.inverse()))
}

/// Symmetric square-root factor `A` with `A·Aᵀ = m` for a PSD matrix.
///
/// Eigenvalues down to `-1e-12·max(1, ‖m‖)` are treated as zero.
pub fn psd_factor(m: &DMatrix<f64>, name: &'static str) -> Result<DMatrix<f64>> {
    check_psd(m, name)?;
    let eig = SymmetricEigen::new(symmetrize(m));
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose())
}

pub fn psd_factor2(m: &Matrix2<f64>, name: &'static str) -> Result<Matrix2<f64>> {
    let f = psd_factor(&to_dyn2(m), name)?;
    Ok(Matrix2::from_iterator(f.iter().copied()))
}

/// Rejects non-finite, asymmetric or indefinite matrices.
pub fn check_psd(m: &DMatrix<f64>, name: &'static str) -> Result<()> {
    if !m.is_square() {
        return Err(EotError::InvalidCovariance {
            name,
            reason: format!("not square ({}x{})", m.nrows(), m.ncols()),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(EotError::InvalidCovariance {
            name,
            reason: "non-finite entry".into(),
        });
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-9 * scale {
        return Err(EotError::InvalidCovariance {
            name,
            reason: "not symmetric".into(),
        });
    }
    let min = SymmetricEigen::new(symmetrize(m)).eigenvalues.min();
    if min < -1e-12 * scale {
        return Err(EotError::InvalidCovariance {
            name,
            reason: format!("negative eigenvalue {min:.3e}"),
        });
    }
    Ok(())
}

pub fn check_psd2(m: &Matrix2<f64>, name: &'static str) -> Result<()> {
    check_psd(&to_dyn2(m), name)
}

pub fn check_psd3(m: &Matrix3<f64>, name: &'static str) -> Result<()> {
    check_psd(&to_dyn3(m), name)
}

pub fn to_dyn2(m: &Matrix2<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(2, 2, m.as_slice())
}

pub fn to_dyn3(m: &Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 3, m.as_slice())
}

pub fn to_mat3(m: &DMatrix<f64>) -> Matrix3<f64> {
    Matrix3::from_column_slice(m.as_slice())
}

pub fn top_left2(m: &DMatrix<f64>) -> Matrix2<f64> {
    Matrix2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
}

/// `a ⪰ b` in the Loewner order, up to `tol`.
pub fn loewner_geq(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    SymmetricEigen::new(symmetrize(&(a - b))).eigenvalues.min() >= -tol
}

pub fn min_max_eigen(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(symmetrize(m)).eigenvalues;
    (eig.min(), eig.max())
}
