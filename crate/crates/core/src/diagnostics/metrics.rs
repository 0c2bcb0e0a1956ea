use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{EotError, Result};
use crate::geometry::{rotation, Extent, Point};
use crate::linalg;

pub const OSPA_CUTOFF: f64 = 100.0;
pub const OSPA_ORDER: f64 = 2.0;

/// SPD matrix `R(α)·diag(l1², l2²)·R(α)ᵀ` of an extent.
pub fn extent_spd(p: &Extent) -> Matrix2<f64> {
    let r = rotation(p.alpha());
    r * Matrix2::new(p.l1() * p.l1(), 0.0, 0.0, p.l2() * p.l2()) * r.transpose()
}

fn sqrt_psd2(m: &Matrix2<f64>) -> Matrix2<f64> {
    let eig = SymmetricEigen::new(linalg::symmetrize2(m));
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    eig.eigenvectors * Matrix2::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Gaussian Wasserstein distance between two (center, extent) pairs.
pub fn gwd(m1: &Point, p1: &Extent, m2: &Point, p2: &Extent) -> f64 {
    let x1 = extent_spd(p1);
    let x2 = extent_spd(p2);
    let r1 = sqrt_psd2(&x1);
    let cross = sqrt_psd2(&(r1 * x2 * r1));
    let shape = (x1 + x2 - 2.0 * cross).trace().max(0.0);
    ((m1 - m2).norm_squared() + shape).sqrt()
}

/// OSPA distance between two rectangles given by their ordered corners.
///
/// Only the 8 correspondences that keep the boundary order (4 cyclic shifts,
/// each optionally reversed) are searched.
pub fn ospa_vertices(est: &[Point; 4], truth: &[Point; 4], cutoff: f64, order: f64) -> f64 {
    let mut best = f64::INFINITY;
    for shift in 0..4 {
        for reversed in [false, true] {
            let total: f64 = (0..4)
                .map(|i| {
                    let j = if reversed { (shift + 4 - i) % 4 } else { (shift + i) % 4 };
                    (est[i] - truth[j]).norm().min(cutoff).powf(order)
                })
                .sum();
            best = best.min(total);
        }
    }
    (best / 4.0).powf(1.0 / order)
}

/// `(x̂ − x)ᵀ·C⁻¹·(x̂ − x)` for one estimate.
pub fn nees(x_hat: &DVector<f64>, c: &DMatrix<f64>, truth: &DVector<f64>) -> Result<f64> {
    nees_of_error(&(x_hat - truth), c)
}

pub fn nees_of_error(e: &DVector<f64>, c: &DMatrix<f64>) -> Result<f64> {
    let w = linalg::spd_solve_vec(c, e, "NEES covariance")?;
    Ok(e.dot(&w))
}

/// Mean NEES over Monte Carlo runs.
pub fn average_nees<'a>(samples: impl IntoIterator<Item = (&'a DVector<f64>, &'a DMatrix<f64>)>) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (e, c) in samples {
        sum += nees_of_error(e, c)?;
        count += 1;
    }
    if count == 0 {
        return Err(EotError::Config("NEES average over zero samples".into()));
    }
    Ok(sum / count as f64)
}

/// Two-sided `confidence` interval for the run-averaged NEES of an
/// `n`-dimensional state over `m` runs: chi-square quantiles with `n·m`
/// degrees of freedom, divided by `m`.
pub fn nees_bounds(n: usize, m: usize, confidence: f64) -> Result<(f64, f64)> {
    if n == 0 || m == 0 || !(confidence > 0.0 && confidence < 1.0) {
        return Err(EotError::Config(format!(
            "NEES bounds need n, M >= 1 and 0 < confidence < 1 (got {n}, {m}, {confidence})"
        )));
    }
    let dof = (n * m) as f64;
    let chi = ChiSquared::new(dof).map_err(|e| EotError::Config(e.to_string()))?;
    let tail = (1.0 - confidence) / 2.0;
    Ok((chi.inverse_cdf(tail) / m as f64, chi.inverse_cdf(1.0 - tail) / m as f64))
}

/// Mean norm of the pairwise differences between node estimates.
pub fn acee(estimates: &[DVector<f64>]) -> Result<f64> {
    let n = estimates.len();
    if n < 2 {
        return Err(EotError::Config("ACEE needs at least two nodes".into()));
    }
    let mut sum = 0.0;
    for s in 0..n {
        for j in (s + 1)..n {
            sum += (&estimates[s] - &estimates[j]).norm();
        }
    }
    // Each unordered pair appears twice in the full double sum.
    Ok(2.0 * sum / (n * (n - 1)) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::extent_vertices;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::PI;

    fn ext(a: f64, l1: f64, l2: f64) -> Extent {
        Extent::new(a, l1, l2).unwrap()
    }

    #[test]
    fn gwd_examples() {
        let p = ext(0.3, 5.0, 2.0);
        let m = Point::new(1.0, 2.0);
        assert_relative_eq!(gwd(&m, &p, &m, &p), 0.0, epsilon = 1e-7);
        assert_relative_eq!(gwd(&m, &p, &Point::new(4.0, 6.0), &p), 5.0, epsilon = 1e-7);
        let d = gwd(&m, &ext(0.0, 3.0, 3.0), &m, &ext(1.0, 5.0, 5.0));
        assert_relative_eq!(d, 2.0f64.sqrt() * 2.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn gwd_is_a_metric(
            a in proptest::array::uniform8(-3.0f64..3.0),
            b in proptest::array::uniform8(-3.0f64..3.0),
            c in proptest::array::uniform8(-3.0f64..3.0),
        ) {
            let pair = |v: [f64; 8]| (Point::new(v[0] * 10.0, v[1] * 10.0), ext(v[2], 1.0 + v[3].abs(), 1.0 + v[4].abs()));
            let (ma, pa) = pair(a);
            let (mb, pb) = pair(b);
            let (mc, pc) = pair(c);
            let ab = gwd(&ma, &pa, &mb, &pb);
            prop_assert!((ab - gwd(&mb, &pb, &ma, &pa)).abs() < 1e-9);
            prop_assert!(ab >= 0.0);
            let ac = gwd(&ma, &pa, &mc, &pc);
            let bc = gwd(&mb, &pb, &mc, &pc);
            prop_assert!(ac <= ab + bc + 1e-9);
        }
    }

    #[test]
    fn gwd_identity_of_indiscernibles() {
        let m = Point::zeros();
        assert!(gwd(&m, &ext(0.0, 2.0, 1.0), &m, &ext(0.1, 2.0, 1.0)) > 1e-3);
        // A half turn is the same ellipse.
        assert_relative_eq!(gwd(&m, &ext(0.2, 2.0, 1.0), &m, &ext(0.2 + PI, 2.0, 1.0)), 0.0, epsilon = 1e-6);
    }

    /// Reference OSPA over all 24 assignments.
    fn ospa_exhaustive(a: &[Point; 4], b: &[Point; 4], c: f64, p: f64) -> f64 {
        let mut best = f64::INFINITY;
        let mut idx = [0usize, 1, 2, 3];
        permute(&mut idx, 0, &mut |perm| {
            let t: f64 = (0..4).map(|i| (a[i] - b[perm[i]]).norm().min(c).powf(p)).sum();
            best = best.min(t);
        });
        (best / 4.0).powf(1.0 / p)
    }

    fn permute(v: &mut [usize; 4], k: usize, f: &mut impl FnMut(&[usize; 4])) {
        if k == 4 {
            f(v);
            return;
        }
        for i in k..4 {
            v.swap(k, i);
            permute(v, k + 1, f);
            v.swap(k, i);
        }
    }

    #[test]
    fn ospa_examples() {
        let p = ext(0.4, 10.0, 5.0);
        let m = Point::new(2.0, -1.0);
        let v = extent_vertices(&m, &p);
        assert_relative_eq!(ospa_vertices(&v, &v, OSPA_CUTOFF, OSPA_ORDER), 0.0);
        let shifted = extent_vertices(&(m + Point::new(3.0, 4.0)), &p);
        assert_relative_eq!(ospa_vertices(&shifted, &v, OSPA_CUTOFF, OSPA_ORDER), 5.0, epsilon = 1e-12);
        let turned = extent_vertices(&m, &ext(0.4 + PI, 10.0, 5.0));
        assert_relative_eq!(ospa_vertices(&turned, &v, OSPA_CUTOFF, OSPA_ORDER), 0.0, epsilon = 1e-9);
        assert_relative_eq!(ospa_exhaustive(&turned, &v, OSPA_CUTOFF, OSPA_ORDER), 0.0, epsilon = 1e-9);
        let far = extent_vertices(&(m + Point::new(1e4, 0.0)), &p);
        assert_relative_eq!(ospa_vertices(&far, &v, OSPA_CUTOFF, OSPA_ORDER), OSPA_CUTOFF);
    }

    #[test]
    fn ospa_matches_exhaustive_search_for_rectangles() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in 0..500 {
            let mut draw = |s: f64| s * rng.random::<f64>();
            let (l1, l2) = (2.0 + draw(10.0), 2.0 + draw(10.0));
            let alpha = draw(7.0);
            let m = Point::new(draw(20.0), draw(20.0));
            let a = extent_vertices(&m, &ext(alpha, l1, l2));
            // Same rectangle described by a symmetry, then slightly perturbed.
            let (beta, k1, k2) = match k % 3 {
                0 => (alpha, l1, l2),
                1 => (alpha + PI, l1, l2),
                _ => (alpha + PI / 2.0, l2, l1),
            };
            let jitter = Point::new(draw(0.5), draw(0.5));
            let b = extent_vertices(&(m + jitter), &ext(beta + draw(0.05), k1 + draw(0.3), k2 + draw(0.3)));
            let fast = ospa_vertices(&a, &b, OSPA_CUTOFF, OSPA_ORDER);
            let full = ospa_exhaustive(&a, &b, OSPA_CUTOFF, OSPA_ORDER);
            assert_relative_eq!(fast, full, epsilon = 1e-12);
            // Far apart sets: restricted search can only be larger.
            let c = extent_vertices(&Point::new(draw(50.0), draw(50.0)), &ext(draw(7.0), 1.0 + draw(10.0), 1.0 + draw(10.0)));
            let restricted = ospa_vertices(&a, &c, OSPA_CUTOFF, OSPA_ORDER);
            assert!(restricted >= ospa_exhaustive(&a, &c, OSPA_CUTOFF, OSPA_ORDER) - 1e-12);
            assert!(restricted <= OSPA_CUTOFF);
        }
    }

    #[test]
    fn nees_examples() {
        let c = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
        let x = DVector::from_column_slice(&[1.0, 2.0]);
        assert_eq!(nees(&x, &c, &x).unwrap(), 0.0);
        let l = c.clone().cholesky().unwrap().l();
        let u = DVector::from_column_slice(&[1.0, 1.0]);
        let e = &l * &u;
        assert_relative_eq!(nees_of_error(&e, &c).unwrap(), 2.0, epsilon = 1e-12);
        assert!(nees(&x, &DMatrix::zeros(2, 2), &x).is_err());
    }

    #[test]
    fn nees_of_consistent_errors_has_mean_n() {
        let c = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 0.5]);
        let l = c.clone().cholesky().unwrap().l();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let errs: Vec<DVector<f64>> = (0..100_000)
            .map(|_| &l * DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let mean = average_nees(errs.iter().map(|e| (e, &c))).unwrap();
        assert!((mean - 3.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn nees_bounds_bracket_the_mean() {
        let (lo, hi) = nees_bounds(4, 50, 0.99).unwrap();
        assert!(lo < 4.0 && 4.0 < hi);
        let (lo95, hi95) = nees_bounds(4, 50, 0.95).unwrap();
        assert!(lo < lo95 && hi95 < hi);
        // chi2(1) quantile at 0.975 is 5.0239
        assert_relative_eq!(nees_bounds(1, 1, 0.95).unwrap().1, 5.023_886, epsilon = 1e-5);
        assert!(nees_bounds(0, 1, 0.9).is_err());
    }

    #[test]
    fn acee_examples() {
        let a = DVector::from_column_slice(&[1.0, 1.0]);
        assert_eq!(acee(&[a.clone(), a.clone(), a.clone()]).unwrap(), 0.0);
        let b = DVector::from_column_slice(&[1.0, 3.0]);
        assert_relative_eq!(acee(&[a.clone(), b.clone()]).unwrap(), 2.0);
        let c = DVector::from_column_slice(&[-2.0, 0.5]);
        let v1 = acee(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let v2 = acee(&[c, a.clone(), b]).unwrap();
        assert_relative_eq!(v1, v2, epsilon = 1e-14);
        assert!(acee(&[a]).is_err());
    }
}
