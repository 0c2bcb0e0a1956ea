//! Object representation under the multiplicative error model.
//!
//! A measurement is `y = H·x + S(p)·h + v`, where `S(p) = Rot(α)·diag(l1, l2)`
//! is the shape matrix of the extent `p = [α, l1, l2]`, `h ~ N(0, Ch)` is the
//! multiplicative noise locating the scattering source and `v ~ N(0, Cv)` is
//! additive sensor noise.

use std::f64::consts::PI;

use nalgebra::{DVector, Matrix2, Matrix2x3, Vector2, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{EotError, Result};
use crate::linalg;

pub type Point = Vector2<f64>;

/// Default lower bound applied to estimated semi-axes (m).
pub const DEFAULT_SEMI_AXIS_FLOOR: f64 = 1e-3;

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(alpha: f64) -> f64 {
    let a = alpha.rem_euclid(2.0 * PI);
    if a > PI {
        a - 2.0 * PI
    } else {
        a
    }
}

pub fn rotation(alpha: f64) -> Matrix2<f64> {
    let (s, c) = alpha.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Kinematic state `[m, ṁ, ...]`; the first two entries are the position.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicState(DVector<f64>);

impl KinematicState {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(EotError::DimensionMismatch {
                context: "kinematic state",
                expected: ">= 2".into(),
                actual: values.len().to_string(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EotError::Config("kinematic state has non-finite entries".into()));
        }
        Ok(Self(values))
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(values))
    }

    pub fn position(&self) -> Point {
        Point::new(self.0[0], self.0[1])
    }

    /// Velocity block, when the state carries one.
    pub fn velocity(&self) -> Option<Point> {
        (self.0.len() >= 4).then(|| Point::new(self.0[2], self.0[3]))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }
}

/// Extent `[α, l1, l2]`: orientation (rad, counterclockwise from the x axis)
/// and the two semi-axis lengths (m). The orientation is kept in `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    alpha: f64,
    l1: f64,
    l2: f64,
}

impl Extent {
    pub fn new(alpha: f64, l1: f64, l2: f64) -> Result<Self> {
        if !(alpha.is_finite() && l1.is_finite() && l2.is_finite()) {
            return Err(EotError::InvalidExtent("non-finite parameter".into()));
        }
        if l1 <= 0.0 || l2 <= 0.0 {
            return Err(EotError::InvalidExtent(format!(
                "semi-axes must be positive, got ({l1}, {l2})"
            )));
        }
        Ok(Self {
            alpha: wrap_angle(alpha),
            l1,
            l2,
        })
    }

    /// Builds an extent from an estimate vector, clamping both semi-axes to
    /// `floor`.
    pub fn from_estimate(p: &Vector3<f64>, floor: f64) -> Result<Self> {
        Self::new(p[0], p[1].max(floor), p[2].max(floor))
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn l1(&self) -> f64 {
        self.l1
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.alpha, self.l1, self.l2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Ellipse,
    Rectangle,
}

/// `S = Rot(α)·diag(l1, l2)`.
pub fn shape_matrix(p: &Extent) -> Matrix2<f64> {
    rotation(p.alpha) * Matrix2::new(p.l1, 0.0, 0.0, p.l2)
}

/// Jacobians of the two rows of the shape matrix with respect to `[α, l1, l2]`.
///
/// `J_m[(j, c)] = ∂S[(m, j)] / ∂p[c]`, so that the first-order change of the
/// m-th entry of `S·h` is `hᵀ·J_m·(p − p̂)`.
pub fn shape_row_jacobians(p: &Extent) -> (Matrix2x3<f64>, Matrix2x3<f64>) {
    let (s, c) = p.alpha.sin_cos();
    let (l1, l2) = (p.l1, p.l2);
    // S row 1 = [l1·cos α, −l2·sin α]
    #[rustfmt::skip]
    let j1 = Matrix2x3::new(
        -l1 * s, c,   0.0,
        -l2 * c, 0.0, -s,
    );
    // S row 2 = [l1·sin α, l2·cos α]
    #[rustfmt::skip]
    let j2 = Matrix2x3::new(
        l1 * c,  s,   0.0,
        -l2 * s, 0.0, c,
    );
    (j1, j2)
}

/// Draws `count` measurements `y = H·x + S·h + v`.
pub fn sample_measurements<R: Rng + ?Sized>(
    x: &KinematicState,
    p: &Extent,
    ch: &Matrix2<f64>,
    cv: &Matrix2<f64>,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Point>> {
    let ch_factor = linalg::psd_factor2(ch, "multiplicative noise covariance")?;
    let cv_factor = linalg::psd_factor2(cv, "measurement noise covariance")?;
    let s = shape_matrix(p);
    let center = x.position();
    let draw = |rng: &mut R| Point::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    Ok((0..count)
        .map(|_| {
            let h = ch_factor * draw(rng);
            let v = cv_factor * draw(rng);
            center + s * h + v
        })
        .collect())
}

/// Rectangle corners, counterclockwise from the body-frame corner `(+l1, +l2)`.
pub fn extent_vertices(m: &Point, p: &Extent) -> [Point; 4] {
    let r = rotation(p.alpha);
    let (a, b) = (p.l1, p.l2);
    [
        Point::new(a, b),
        Point::new(-a, b),
        Point::new(-a, -b),
        Point::new(a, -b),
    ]
    .map(|corner| m + r * corner)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ext(alpha: f64, l1: f64, l2: f64) -> Extent {
        Extent::new(alpha, l1, l2).unwrap()
    }

    /// Central-difference Jacobian of row `row` of the shape matrix.
    fn fd_row_jacobian(p: &Extent, row: usize) -> Matrix2x3<f64> {
        let h = 1e-6;
        let base = p.to_vector();
        let mut j = Matrix2x3::zeros();
        for c in 0..3 {
            let mut plus = base;
            let mut minus = base;
            plus[c] += h;
            minus[c] -= h;
            let sp = shape_matrix(&Extent::from_estimate(&plus, 0.0).unwrap());
            let sm = shape_matrix(&Extent::from_estimate(&minus, 0.0).unwrap());
            for k in 0..2 {
                j[(k, c)] = (sp[(row, k)] - sm[(row, k)]) / (2.0 * h);
            }
        }
        j
    }

    #[test]
    fn shape_matrix_examples() {
        assert_relative_eq!(shape_matrix(&ext(0.0, 2.0, 3.0)), Matrix2::new(2.0, 0.0, 0.0, 3.0));
        assert_relative_eq!(
            shape_matrix(&ext(PI / 2.0, 1.0, 1.0)),
            Matrix2::new(0.0, -1.0, 1.0, 0.0),
            epsilon = 1e-15
        );
        let s = shape_matrix(&ext(PI / 4.0, 170.0, 40.0));
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(
            s,
            Matrix2::new(170.0 * r, -40.0 * r, 170.0 * r, 40.0 * r),
            epsilon = 1e-12
        );
        assert_relative_eq!(s[(0, 0)], 120.208152801713, epsilon = 1e-9);
        assert_relative_eq!(s[(0, 1)], -28.284271247461902, epsilon = 1e-9);
    }

    #[test]
    fn jacobians_at_zero_orientation() {
        let (j1, j2) = shape_row_jacobians(&ext(0.0, 2.5, 7.0));
        assert_relative_eq!(j1, Matrix2x3::new(0.0, 1.0, 0.0, -7.0, 0.0, 0.0));
        assert_relative_eq!(j2, Matrix2x3::new(2.5, 0.0, 0.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn third_row_vanishes_for_circle() {
        let p = ext(0.0, 3.0, 3.0);
        let s = shape_matrix(&p);
        let (j1, j2) = shape_row_jacobians(&p);
        let ch = Matrix2::identity() * 0.7;
        let row = s.row(0) * ch * j2 + s.row(1) * ch * j1;
        assert!(row.amax() < 1e-14);
    }

    #[test]
    fn jacobians_reproduce_first_order_term() {
        let p = ext(0.3, 4.0, 1.5);
        let dp = Vector3::new(1e-5, -2e-5, 3e-5);
        let h = Point::new(0.4, -0.9);
        let (j1, j2) = shape_row_jacobians(&p);
        let moved = Extent::from_estimate(&(p.to_vector() + dp), 0.0).unwrap();
        let exact = (shape_matrix(&moved) - shape_matrix(&p)) * h;
        let linear = Point::new((h.transpose() * j1 * dp)[0], (h.transpose() * j2 * dp)[0]);
        assert!((exact - linear).amax() < 1e-9);
    }

    #[test]
    fn zero_noise_measurements_are_the_center() {
        let x = KinematicState::from_slice(&[3.0, -4.0, 1.0, 1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ys = sample_measurements(&x, &ext(0.4, 2.0, 1.0), &Matrix2::zeros(), &Matrix2::zeros(), 20, &mut rng)
            .unwrap();
        assert!(ys.iter().all(|y| (y - x.position()).amax() == 0.0));
    }

    #[test]
    fn sample_moments_match_model() {
        let n = 100_000;
        let (l1, l2, sigma2) = (3.0, 1.5, 0.5);
        let x = KinematicState::from_slice(&[10.0, -2.0]).unwrap();
        let ch = Matrix2::identity() / 3.0;
        let cv = Matrix2::identity() * sigma2;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let ys = sample_measurements(&x, &ext(0.0, l1, l2), &ch, &cv, n, &mut rng).unwrap();
        let mean = ys.iter().sum::<Point>() / n as f64;
        let var = [l1 * l1 / 3.0 + sigma2, l2 * l2 / 3.0 + sigma2];
        for k in 0..2 {
            let bound = 4.0 * (var[k] / n as f64).sqrt();
            assert!((mean[k] - x.position()[k]).abs() < bound);
        }
        let cov = ys
            .iter()
            .map(|y| (y - mean) * (y - mean).transpose())
            .sum::<Matrix2<f64>>()
            / (n - 1) as f64;
        assert_relative_eq!(cov[(0, 0)], var[0], max_relative = 0.05);
        assert_relative_eq!(cov[(1, 1)], var[1], max_relative = 0.05);
        assert!(cov[(0, 1)].abs() < 0.05 * var[0].min(var[1]));
    }

    #[test]
    fn invalid_covariance_rejected() {
        let x = KinematicState::from_slice(&[0.0, 0.0]).unwrap();
        let bad = Matrix2::new(1.0, 2.0, 2.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_measurements(&x, &ext(0.0, 1.0, 1.0), &bad, &Matrix2::zeros(), 1, &mut rng).is_err());
        assert!(sample_measurements(&x, &ext(0.0, 1.0, 1.0), &Matrix2::zeros(), &bad, 1, &mut rng).is_err());
    }

    #[test]
    fn vertices_unit_square() {
        let v = extent_vertices(&Point::zeros(), &ext(0.0, 1.0, 1.0));
        let expected = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
        for (p, (ex, ey)) in v.iter().zip(expected) {
            assert_relative_eq!(*p, Point::new(ex, ey));
        }
        let shifted = extent_vertices(&Point::new(5.0, 0.0), &ext(0.0, 1.0, 1.0));
        for (a, b) in shifted.iter().zip(v.iter()) {
            assert_relative_eq!(a - b, Point::new(5.0, 0.0));
        }
    }

    #[test]
    fn quarter_turn_rotates_vertices() {
        let base = extent_vertices(&Point::zeros(), &ext(0.0, 2.0, 1.0));
        let turned = extent_vertices(&Point::zeros(), &ext(PI / 2.0, 2.0, 1.0));
        let r = rotation(PI / 2.0);
        for (t, b) in turned.iter().zip(base.iter()) {
            assert_relative_eq!(*t, r * b, epsilon = 1e-12);
        }
    }

    #[test]
    fn wrap_angle_range() {
        assert_relative_eq!(wrap_angle(PI), PI);
        assert_relative_eq!(wrap_angle(-PI), PI);
        assert_relative_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        assert!(Extent::new(0.0, 0.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn circle_shape_is_rotation_invariant(alpha in -10.0f64..10.0, l in 0.01f64..100.0) {
            let s = shape_matrix(&ext(alpha, l, l));
            let sst = s * s.transpose();
            prop_assert!((sst - Matrix2::identity() * l * l).amax() <= 1e-9 * l * l);
        }

        #[test]
        fn determinant_is_area_factor(alpha in -10.0f64..10.0, l1 in 0.01f64..100.0, l2 in 0.01f64..100.0) {
            let det = shape_matrix(&ext(alpha, l1, l2)).determinant();
            prop_assert!((det - l1 * l2).abs() <= 1e-10 * l1 * l2);
        }

        #[test]
        fn jacobians_match_finite_differences(alpha in -PI..PI, l1 in 0.5f64..50.0, l2 in 0.5f64..50.0) {
            let p = ext(alpha, l1, l2);
            let (j1, j2) = shape_row_jacobians(&p);
            for (analytic, row) in [(j1, 0), (j2, 1)] {
                let fd = fd_row_jacobian(&p, row);
                let scale = analytic.amax().max(1.0);
                prop_assert!((analytic - fd).amax() <= 1e-6 * scale);
            }
        }

        #[test]
        fn vertices_invariant_under_half_turn(alpha in -PI..PI, l1 in 0.1f64..10.0, l2 in 0.1f64..10.0) {
            let m = Point::new(1.0, -2.0);
            let a = extent_vertices(&m, &ext(alpha, l1, l2));
            let b = extent_vertices(&m, &ext(alpha + PI, l1, l2));
            for p in &a {
                prop_assert!(b.iter().any(|q| (p - q).norm() < 1e-9));
            }
        }
    }
}
