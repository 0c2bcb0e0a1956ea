use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::config::ScenarioConfig;
use crate::consensus::{check_primitive, is_doubly_stochastic, NodeKind};
use crate::error::{EotError, Result};
use crate::experiment::{Experiment, RunRecord};
use crate::linalg;
use crate::linearization::{kinematic_noise_cov_unchecked, measurement_matrix};
use crate::trackers::FilterKind;

/// Observed `[min, max]` of a scalar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Default for Range {
    fn default() -> Self {
        Self {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }
}

impl Range {
    pub fn observe(&mut self, v: f64) {
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }

    pub fn observe_all(&mut self, vs: impl IntoIterator<Item = f64>) {
        vs.into_iter().for_each(|v| self.observe(v));
    }

    /// Nonempty, finite and bounded away from zero.
    pub fn positive_and_bounded(&self) -> bool {
        self.min.is_finite() && self.max.is_finite() && self.min > 0.0
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:.6e}, {:.6e}]", self.min, self.max)
    }
}

/// Observed bounds behind the stability assumptions of the consensus filters.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    /// Singular values of the kinematic transition.
    pub f_singular: Range,
    /// Singular values of the measurement matrix.
    pub h_singular: Range,
    /// Compensation matrix entries; the filters run with `β = I`.
    pub beta: Range,
    /// Perron vector entries of `Πᴸ`.
    pub tau: Range,
    pub omega: Range,
    /// Eigenvalues of the kinematic process noise covariance.
    pub process_noise: Range,
    /// Eigenvalues of the linearized kinematic measurement noise along the runs.
    pub measurement_noise: Range,
    /// Eigenvalues of the kinematic information matrices along the runs.
    pub information: Range,
    pub doubly_stochastic: bool,
    pub primitive: bool,
    pub a1: bool,
    pub a2: bool,
    pub a3: bool,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.a1 && self.a2 && self.a3
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

impl fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "A1 {}", verdict(self.a1))?;
        writeln!(f, "  singular values of Fx  {}", self.f_singular)?;
        writeln!(f, "  singular values of H   {}", self.h_singular)?;
        writeln!(f, "  beta                   {}", self.beta)?;
        writeln!(f, "A2 {}", verdict(self.a2))?;
        writeln!(f, "  tau (Perron vector)    {}", self.tau)?;
        writeln!(f, "  omega                  {}", self.omega)?;
        writeln!(f, "  eig process noise Q    {}", self.process_noise)?;
        writeln!(f, "  eig measurement R      {}", self.measurement_noise)?;
        writeln!(f, "  eig information Omega  {}", self.information)?;
        writeln!(f, "A3 {}", verdict(self.a3))?;
        writeln!(f, "  doubly stochastic      {}", self.doubly_stochastic)?;
        writeln!(f, "  primitive              {}", self.primitive)
    }
}

fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

fn eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    SymmetricEigen::new(linalg::symmetrize(m)).eigenvalues.iter().copied().collect()
}

/// Left Perron vector of a primitive stochastic matrix, by power iteration.
pub fn perron_vector(pi: &DMatrix<f64>) -> DVector<f64> {
    let n = pi.nrows();
    let mut v = DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 });
    let pt = pi.transpose();
    for _ in 0..10_000 {
        let next = &pt * &v;
        let next = &next / next.sum();
        let done = (&next - &v).amax() < 1e-14;
        v = next;
        if done {
            break;
        }
    }
    v
}

pub fn check_assumptions(exp: &Experiment, records: &[RunRecord]) -> Result<AssumptionReport> {
    let filter = &exp.filter;
    let dim = exp.config.kinematic_dim();
    let fx = filter
        .motion
        .as_ref()
        .map_or_else(|| DMatrix::identity(dim, dim), |m| m.fx.clone());
    let mut f_singular = Range::default();
    f_singular.observe_all(singular_values(&fx));
    let mut h_singular = Range::default();
    h_singular.observe_all(singular_values(&measurement_matrix(dim)).into_iter().filter(|&s| s > 0.0));
    let mut beta = Range::default();
    beta.observe(1.0);

    let pi = exp.consensus.matrix();
    let rounds = filter.consensus_iterations.max(1) as u32;
    let mut tau = Range::default();
    tau.observe_all(perron_vector(&exp.consensus.power(rounds)).iter().copied());
    let mut omega = Range::default();
    omega.observe(match filter.kind {
        FilterKind::Cm => filter.omega.value(exp.network.len()),
        _ => 1.0,
    });

    let mut process_noise = Range::default();
    match &exp.config.process {
        Some(p) => process_noise.observe_all(eigenvalues(&p.kinematic_cov.to_matrix("kinematic process noise covariance")?)),
        // Static objects have no process noise; the bound is vacuous.
        None => process_noise.observe(1.0),
    }

    let sensors: Vec<usize> = exp.network.sensor_indices();
    let mut measurement_noise = Range::default();
    let mut information = Range::default();
    for rec in records {
        for step in &rec.estimates {
            for (node, out) in step.iter().enumerate() {
                for c in eigenvalues(&out.cx) {
                    if !(c > 0.0) {
                        return Err(EotError::NotPositiveDefinite {
                            context: "recorded kinematic covariance",
                            min_eigenvalue: c,
                            condition: f64::INFINITY,
                        });
                    }
                    information.observe(1.0 / c);
                }
                let noise_nodes: &[usize] = if filter.kind == FilterKind::Ceot {
                    &sensors
                } else if exp.network.kind(node) == NodeKind::Sensor {
                    std::slice::from_ref(&sensors[sensors.binary_search(&node).expect("sensor index")])
                } else {
                    &[]
                };
                for &s in noise_nodes {
                    let rx =
                        kinematic_noise_cov_unchecked(&out.extent, &out.cp, &filter.ch, &filter.measurement_noise[s]);
                    measurement_noise.observe_all(eigenvalues(&linalg::to_dyn2(&rx)));
                }
            }
        }
    }

    let doubly_stochastic = is_doubly_stochastic(pi, 1e-12);
    let primitive = check_primitive(pi);
    let a1 = f_singular.positive_and_bounded() && h_singular.positive_and_bounded() && beta.positive_and_bounded();
    let a2 = [tau, omega, process_noise, measurement_noise, information]
        .iter()
        .all(Range::positive_and_bounded);
    Ok(AssumptionReport {
        f_singular,
        h_singular,
        beta,
        tau,
        omega,
        process_noise,
        measurement_noise,
        information,
        doubly_stochastic,
        primitive,
        a1,
        a2,
        a3: doubly_stochastic && primitive,
    })
}

/// Per-step mean-square kinematic error and the boundedness verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundednessReport {
    /// `E‖x̂ − x‖²` per step, averaged over runs and nodes.
    pub mse: Vec<f64>,
    /// Mean over the middle half of the steps.
    pub mid_mean: f64,
    /// Mean over the last quarter of the steps.
    pub tail_mean: f64,
    pub bounded: bool,
}

pub fn mean_square_error(records: &[RunRecord]) -> Vec<f64> {
    let steps = records.first().map_or(0, |r| r.estimates.len());
    (0..steps)
        .map(|k| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for rec in records {
                let truth = rec.truth[k].x.as_vector();
                for out in &rec.estimates[k] {
                    sum += (&out.x_hat - truth).norm_squared();
                    count += 1;
                }
            }
            sum / count as f64
        })
        .collect()
}

pub fn boundedness(mse: Vec<f64>) -> Result<BoundednessReport> {
    let n = mse.len();
    if n < 4 {
        return Err(EotError::Config("boundedness needs at least 4 steps".into()));
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let mid_mean = mean(&mse[n / 4..(3 * n).div_ceil(4)]);
    let tail_mean = mean(&mse[n - n.div_ceil(4)..]);
    Ok(BoundednessReport {
        bounded: tail_mean.is_finite() && tail_mean <= 2.0 * mid_mean,
        mse,
        mid_mean,
        tail_mean,
    })
}

/// Runs `runs` Monte Carlo runs of `steps` steps and checks that the
/// mean-square error does not grow in the tail.
pub fn bounded_mse_experiment(
    config: &ScenarioConfig,
    steps: usize,
    runs: usize,
) -> Result<(BoundednessReport, AssumptionReport)> {
    if config.filter.kind.is_distributed() && config.filter.consensus_iterations < 2 {
        return Err(EotError::Config("boundedness requires more than one consensus iteration".into()));
    }
    let mut cfg = config.clone();
    cfg.steps = steps;
    cfg.runs = runs;
    let exp = Experiment::new(cfg)?;
    let records = exp.simulate_runs()?;
    let report = boundedness(mean_square_error(&records))?;
    let assumptions = check_assumptions(&exp, &records)?;
    Ok((report, assumptions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset;
    use crate::trackers::ncv_transition;

    #[test]
    fn perron_vector_of_a_doubly_stochastic_matrix_is_uniform() {
        let net = crate::config::grid_network().unwrap();
        let pi = crate::consensus::metropolis_weights(&net);
        let tau = perron_vector(pi.matrix());
        assert!(tau.iter().all(|t| (t - 0.05).abs() < 1e-9));
    }

    #[test]
    fn ncv_transition_spectrum_is_bounded() {
        let sv = singular_values(&ncv_transition(10.0));
        assert!(sv.iter().all(|&s| s > 0.0 && s.is_finite()));
    }

    #[test]
    fn short_run_passes() {
        let mut cfg = preset("s2").unwrap();
        cfg.filter.consensus_iterations = 2;
        let (b, a) = bounded_mse_experiment(&cfg, 8, 2).unwrap();
        assert_eq!(b.mse.len(), 8);
        assert!(a.all_pass(), "{a}");
        assert!(a.information.min > 0.0);
    }

    #[test]
    fn rejects_single_iteration() {
        let cfg = preset("s2").unwrap();
        let mut one = cfg.clone();
        one.filter.consensus_iterations = 1;
        assert!(bounded_mse_experiment(&one, 8, 1).is_err());
    }

    #[test]
    fn boundedness_windows() {
        let r = boundedness(vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 3.0, 3.0]).unwrap();
        assert!(!r.bounded);
        let r = boundedness(vec![9.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.5, 1.5]).unwrap();
        assert!(r.bounded);
    }
}
