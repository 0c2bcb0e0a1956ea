//! Additive-noise linear measurement models for the kinematics and the extent,
//! built around the previous sequential estimate.
//!
//! Kinematics: `y ≈ H·x + v̄ˣ`, `Cov(v̄ˣ) = Rx = Cᴵ + Cᴵᴵ + Cv`.
//! Extent: `Y = F·(d⊗d) ≈ M·p + vᵖ` with `d = y − H·x̂`; the noise mean and
//! covariance follow from matching the first two moments of `Y`, using the
//! Gaussian fourth-moment identity for `E[(d⊗d)(d⊗d)ᵀ]`.

use std::sync::LazyLock;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Matrix3x4, RowVector3, SymmetricEigen, Vector3, Vector4};

use crate::error::{EotError, Result};
use crate::geometry::{shape_matrix, shape_row_jacobians, Extent, Point};
use crate::linalg;

/// Relative eigenvalue floor applied to the extent noise covariance.
pub const EXTENT_NOISE_FLOOR: f64 = 1e-8;

/// The two constant selectors acting on `vect(A)` for a 2×2 `A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KronSelectors {
    /// Picks `(a11, a22, a21)` from the column-stacked `vect(A)`.
    pub f: Matrix3x4<f64>,
    /// Picks `(a11, a22, a12)`.
    pub f_tilde: Matrix3x4<f64>,
}

pub static SELECTORS: LazyLock<KronSelectors> = LazyLock::new(|| KronSelectors {
    #[rustfmt::skip]
    f: Matrix3x4::new(
        1.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
        0.0, 1.0, 0.0, 0.0,
    ),
    #[rustfmt::skip]
    f_tilde: Matrix3x4::new(
        1.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
        0.0, 0.0, 1.0, 0.0,
    ),
});

/// Column-stacking vectorization of a 2×2 matrix.
pub fn vect(a: &Matrix2<f64>) -> Vector4<f64> {
    Vector4::from_column_slice(a.as_slice())
}

/// Measurement matrix `[I₂ 0]` for a kinematic state of dimension `dim`.
pub fn measurement_matrix(dim: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(2, dim);
    h[(0, 0)] = 1.0;
    h[(1, 1)] = 1.0;
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedKinematicModel {
    pub h: DMatrix<f64>,
    pub rx: Matrix2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedExtentModel {
    pub m: Matrix3<f64>,
    pub vbar: Vector3<f64>,
    pub rp: Matrix3<f64>,
    pub cy: Matrix2<f64>,
}

/// `Cᴵᴵ` with entries `ε_mn = tr{Cp·Ĵₙᵀ·Ch·Ĵₘ}`.
pub fn extent_uncertainty_cov(p_hat: &Extent, cp: &Matrix3<f64>, ch: &Matrix2<f64>) -> Matrix2<f64> {
    let (j1, j2) = shape_row_jacobians(p_hat);
    let j = [j1, j2];
    let mut c = Matrix2::zeros();
    for m in 0..2 {
        for n in 0..2 {
            c[(m, n)] = (cp * j[n].transpose() * ch * j[m]).trace();
        }
    }
    c
}

/// `Rx = Ŝ·Ch·Ŝᵀ + Cᴵᴵ + Cv`.
pub fn kinematic_noise_cov(
    p_hat: &Extent,
    cp: &Matrix3<f64>,
    ch: &Matrix2<f64>,
    cv: &Matrix2<f64>,
) -> Result<Matrix2<f64>> {
    linalg::check_psd3(cp, "extent covariance")?;
    linalg::check_psd2(ch, "multiplicative noise covariance")?;
    linalg::check_psd2(cv, "measurement noise covariance")?;
    Ok(kinematic_noise_cov_unchecked(p_hat, cp, ch, cv))
}

pub(crate) fn kinematic_noise_cov_unchecked(
    p_hat: &Extent,
    cp: &Matrix3<f64>,
    ch: &Matrix2<f64>,
    cv: &Matrix2<f64>,
) -> Matrix2<f64> {
    let s = shape_matrix(p_hat);
    let c1 = s * ch * s.transpose();
    let c2 = extent_uncertainty_cov(p_hat, cp, ch);
    linalg::symmetrize2(&(c1 + c2 + cv))
}

/// `Cy = H·Cx·Hᵀ + Rx`.
pub fn residual_cov(cx: &DMatrix<f64>, rx: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    if cx.nrows() < 2 || !cx.is_square() {
        return Err(EotError::DimensionMismatch {
            context: "residual covariance",
            expected: "square kinematic covariance of size >= 2".into(),
            actual: format!("{}x{}", cx.nrows(), cx.ncols()),
        });
    }
    Ok(linalg::symmetrize2(&(linalg::top_left2(cx) + rx)))
}

/// `Y = F·(d⊗d)` with `d = y − H·x̂`, i.e. `[d1², d2², d1·d2]`.
pub fn pseudo_measurement(y: &Point, x_hat: &DVector<f64>) -> Vector3<f64> {
    let d = y - Point::new(x_hat[0], x_hat[1]);
    let dd = Vector4::from_column_slice(d.kronecker(&d).as_slice());
    SELECTORS.f * dd
}

/// Rows `[2Ŝ₁ChĴ₁; 2Ŝ₂ChĴ₂; Ŝ₁ChĴ₂ + Ŝ₂ChĴ₁]`.
pub fn extent_measurement_matrix(p_hat: &Extent, ch: &Matrix2<f64>) -> Matrix3<f64> {
    let s = shape_matrix(p_hat);
    let (j1, j2) = shape_row_jacobians(p_hat);
    let s1 = s.row(0);
    let s2 = s.row(1);
    let r1: RowVector3<f64> = s1 * ch * j1 * 2.0;
    let r2: RowVector3<f64> = s2 * ch * j2 * 2.0;
    let r3: RowVector3<f64> = s1 * ch * j2 + s2 * ch * j1;
    Matrix3::from_rows(&[r1, r2, r3])
}

/// Mean and covariance of the extent pseudo-measurement noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtentNoiseMoments {
    pub vbar: Vector3<f64>,
    /// Symmetrized covariance before the eigenvalue floor.
    pub rp_raw: Matrix3<f64>,
    /// Covariance after flooring; always positive definite.
    pub rp: Matrix3<f64>,
}

/// `v̄ = F·vect(Cy) − M·p̂`, `Rp = F·(Cy⊗Cy)·(F+F̃)ᵀ − M·Cp·Mᵀ`, then
/// symmetrized and eigenvalue-floored at `1e-8·tr/3`.
pub fn extent_noise_moments(
    cy: &Matrix2<f64>,
    m: &Matrix3<f64>,
    cp: &Matrix3<f64>,
    p_hat: &Vector3<f64>,
) -> ExtentNoiseMoments {
    let sel = &*SELECTORS;
    let vbar = sel.f * vect(cy) - m * p_hat;
    let kron = cy.kronecker(cy);
    let fourth: Matrix3<f64> = sel.f * kron * (sel.f + sel.f_tilde).transpose();
    let rp_raw = linalg::symmetrize3(&(fourth - m * cp * m.transpose()));
    let rp = floor_eigenvalues(&rp_raw, &fourth);
    ExtentNoiseMoments { vbar, rp_raw, rp }
}

fn floor_eigenvalues(rp: &Matrix3<f64>, fallback_scale: &Matrix3<f64>) -> Matrix3<f64> {
    let mut trace = rp.trace();
    if !(trace > 0.0) {
        trace = fallback_scale.trace().abs();
    }
    let floor = EXTENT_NOISE_FLOOR * trace / 3.0;
    let eig = SymmetricEigen::new(*rp);
    if eig.eigenvalues.min() >= floor {
        return *rp;
    }
    let vals = eig.eigenvalues.map(|v| v.max(floor));
    linalg::symmetrize3(&(eig.eigenvectors * Matrix3::from_diagonal(&vals) * eig.eigenvectors.transpose()))
}

/// `Ỹ = Y − F·vect(Cy) + M·p̂`, the zero-mean-noise pseudo-measurement.
pub fn centered_pseudo_measurement(
    y: &Vector3<f64>,
    cy: &Matrix2<f64>,
    m: &Matrix3<f64>,
    p_hat: &Vector3<f64>,
) -> Vector3<f64> {
    y - SELECTORS.f * vect(cy) + m * p_hat
}

/// Both linear models linearized at one estimate.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub kinematic: LinearizedKinematicModel,
    pub extent: LinearizedExtentModel,
}

/// Builds both models at `(x̂, Cx, p̂, Cp)` for one sensor.
///
/// `p_hat` is the raw estimate vector (no wrapping), so that `M·p̂` stays
/// consistent with the information vector it is added to.
pub fn linearize(
    x_hat: &DVector<f64>,
    cx: &DMatrix<f64>,
    p_hat: &Vector3<f64>,
    cp: &Matrix3<f64>,
    ch: &Matrix2<f64>,
    cv: &Matrix2<f64>,
    semi_axis_floor: f64,
) -> Result<Linearization> {
    let extent = Extent::from_estimate(p_hat, semi_axis_floor)?;
    let rx = kinematic_noise_cov_unchecked(&extent, cp, ch, cv);
    let cy = residual_cov(cx, &rx)?;
    let m = extent_measurement_matrix(&extent, ch);
    let moments = extent_noise_moments(&cy, &m, cp, p_hat);
    Ok(Linearization {
        kinematic: LinearizedKinematicModel {
            h: measurement_matrix(x_hat.len()),
            rx,
        },
        extent: LinearizedExtentModel {
            m,
            vbar: moments.vbar,
            rp: moments.rp,
            cy,
        },
    })
}
