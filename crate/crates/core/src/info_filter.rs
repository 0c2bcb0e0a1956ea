//! Information-form correction and prediction.
//!
//! A Gaussian `N(x̂, C)` is carried as `Ω = C⁻¹` and `q = Ω·x̂`. Corrections
//! are additive in `(q, Ω)`; prediction uses the Woodbury form and never
//! inverts the transition matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{EotError, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct InformationState {
    pub q: DVector<f64>,
    pub omega: DMatrix<f64>,
}

/// Additive contribution `(Aᵀ·V·z, Aᵀ·V·A)` of one linear measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct InnovationPair {
    pub dq: DVector<f64>,
    pub d_omega: DMatrix<f64>,
}

impl InnovationPair {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dq: DVector::zeros(dim),
            d_omega: DMatrix::zeros(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.dq.len()
    }

    pub fn accumulate(&mut self, other: &InnovationPair) {
        self.dq += &other.dq;
        self.d_omega += &other.d_omega;
    }
}

fn check_dims(a: &DMatrix<f64>, v: &DMatrix<f64>, z: &DVector<f64>) -> Result<()> {
    if !v.is_square() || v.nrows() != a.nrows() || z.len() != a.nrows() {
        return Err(EotError::DimensionMismatch {
            context: "innovation",
            expected: format!("V {0}x{0}, z of length {0}", a.nrows()),
            actual: format!("V {}x{}, z of length {}", v.nrows(), v.ncols(), z.len()),
        });
    }
    Ok(())
}

/// `dq = Aᵀ·V·z`, `dΩ = Aᵀ·V·A` for a given noise information matrix `V`.
pub fn innovation(a: &DMatrix<f64>, v: &DMatrix<f64>, z: &DVector<f64>) -> Result<InnovationPair> {
    check_dims(a, v, z)?;
    let at_v = a.transpose() * v;
    Ok(InnovationPair {
        dq: &at_v * z,
        d_omega: linalg::symmetrize(&(&at_v * a)),
    })
}

/// Same as [`innovation`] with `V = R⁻¹`, applied through a Cholesky solve.
pub fn innovation_from_noise_cov(
    a: &DMatrix<f64>,
    r: &DMatrix<f64>,
    z: &DVector<f64>,
) -> Result<InnovationPair> {
    check_dims(a, r, z)?;
    let chol = linalg::cholesky(r, "measurement noise covariance")?;
    let v_a = chol.solve(a);
    let v_z = chol.solve(z);
    Ok(InnovationPair {
        dq: a.transpose() * v_z,
        d_omega: linalg::symmetrize(&(a.transpose() * v_a)),
    })
}

impl InformationState {
    pub fn new(q: DVector<f64>, omega: DMatrix<f64>) -> Result<Self> {
        if !omega.is_square() || omega.nrows() != q.len() {
            return Err(EotError::DimensionMismatch {
                context: "information state",
                expected: format!("{0}x{0}", q.len()),
                actual: format!("{}x{}", omega.nrows(), omega.ncols()),
            });
        }
        Ok(Self {
            q,
            omega: linalg::symmetrize(&omega),
        })
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn from_moments(x_hat: &DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != x_hat.len() || !cov.is_square() {
            return Err(EotError::DimensionMismatch {
                context: "from_moments",
                expected: format!("{0}x{0}", x_hat.len()),
                actual: format!("{}x{}", cov.nrows(), cov.ncols()),
            });
        }
        let chol = linalg::cholesky(cov, "covariance")?;
        let omega = linalg::symmetrize(&chol.inverse());
        let q = chol.solve(x_hat);
        Ok(Self { q, omega })
    }

    /// Returns `(x̂, C)` with `x̂ = Ω⁻¹·q` and `C = Ω⁻¹`.
    pub fn to_moments(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let chol = linalg::cholesky(&self.omega, "information matrix")?;
        Ok((chol.solve(&self.q), linalg::symmetrize(&chol.inverse())))
    }

    pub fn mean(&self) -> Result<DVector<f64>> {
        linalg::spd_solve_vec(&self.omega, &self.q, "information matrix")
    }

    /// `q' = q + w·dq`, `Ω' = Ω + w·dΩ`.
    pub fn correct(&self, innov: &InnovationPair, weight: f64) -> InformationState {
        let omega = &self.omega + &innov.d_omega * weight;
        InformationState {
            q: &self.q + &innov.dq * weight,
            omega: linalg::symmetrize(&omega),
        }
    }

    /// Time update with transition `F` and process-noise information `Ww`:
    /// `Ω' = Ww − Ww·F·(Ω + Fᵀ·Ww·F)⁻¹·Fᵀ·Ww`, `q' = Ω'·F·Ω⁻¹·q`.
    pub fn predict(&self, f: &DMatrix<f64>, ww: &DMatrix<f64>) -> Result<InformationState> {
        let n = self.dim();
        if f.shape() != (n, n) || ww.shape() != (n, n) {
            return Err(EotError::DimensionMismatch {
                context: "predict",
                expected: format!("{n}x{n}"),
                actual: format!("F {:?}, Ww {:?}", f.shape(), ww.shape()),
            });
        }
        let ww_f = ww * f;
        let gram = &self.omega + f.transpose() * &ww_f;
        let gain = linalg::spd_solve_mat(&gram, &ww_f.transpose(), "Ω + FᵀWwF")?;
        let omega = linalg::symmetrize(&(ww - &ww_f * gain));
        let x_hat = linalg::spd_solve_vec(&self.omega, &self.q, "information matrix")?;
        let q = &omega * (f * x_hat);
        Ok(InformationState { q, omega })
    }
}
