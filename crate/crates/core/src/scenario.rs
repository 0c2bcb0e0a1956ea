//! Ground truth and per-node measurement synthesis.

use nalgebra::{DVector, Vector2, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::config::{CountLaw, PriorMoments, ScenarioConfig, TrajectorySpec};
use crate::consensus::{NodeKind, SensorNetwork};
use crate::error::{EotError, Result};
use crate::geometry::{sample_measurements, Extent, KinematicState, Point};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub struct TruthState {
    pub x: KinematicState,
    pub extent: Extent,
}

/// One Monte Carlo realization of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub run: usize,
    pub seed: u64,
    pub truth: Vec<TruthState>,
    /// `measurements[step][node]`; empty for communication nodes.
    pub measurements: Vec<Vec<Vec<Point>>>,
    pub prior: PriorMoments,
}

/// Random stream of run `run`: the base seed picks the key, the run index
/// picks the stream, so runs are independent of thread scheduling.
pub fn run_rng(seed: u64, run: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run as u64);
    rng
}

fn state_vector(dim: usize, position: Point, velocity: Vector2<f64>) -> Result<KinematicState> {
    let mut x = DVector::zeros(dim);
    x[0] = position.x;
    x[1] = position.y;
    if dim >= 4 {
        x[2] = velocity.x;
        x[3] = velocity.y;
    }
    KinematicState::new(x)
}

/// Truth at every step. The configured trajectory is noise free so no seed
/// is needed.
pub fn generate_truth(config: &ScenarioConfig) -> Result<Vec<TruthState>> {
    let dim = config.kinematic_dim();
    let [l1, l2] = config.object.semi_axes;
    match &config.trajectory {
        TrajectorySpec::Stationary { position, orientation } => {
            let truth = TruthState {
                x: state_vector(dim, Point::new(position[0], position[1]), Vector2::zeros())?,
                extent: Extent::new(*orientation, l1, l2)?,
            };
            Ok(vec![truth; config.steps])
        }
        TrajectorySpec::Waypoints { waypoints, speed } => {
            let path: Vec<Point> = waypoints.iter().map(|w| Point::new(w[0], w[1])).collect();
            if path.len() < 2 {
                return Err(EotError::Config("waypoint trajectories need at least 2 waypoints".into()));
            }
            (0..config.steps)
                .map(|k| {
                    let (position, heading) = along_path(&path, speed * config.scan_time * k as f64);
                    Ok(TruthState {
                        x: state_vector(dim, position, heading * *speed)?,
                        extent: Extent::new(heading.y.atan2(heading.x), l1, l2)?,
                    })
                })
                .collect()
        }
    }
}

/// Position and unit heading after travelling `distance` along `path`. A
/// point exactly on a waypoint takes the heading of the segment leaving it.
fn along_path(path: &[Point], distance: f64) -> (Point, Vector2<f64>) {
    let mut remaining = distance;
    let last = path.len() - 2;
    for (i, seg) in path.windows(2).enumerate() {
        let delta = seg[1] - seg[0];
        let len = delta.norm();
        let heading = delta / len;
        if remaining < len || i == last {
            return (seg[0] + heading * remaining, heading);
        }
        remaining -= len;
    }
    unreachable!("path has at least one segment")
}

/// Draws the count and the measurements of every sensor node at every step.
pub fn generate_measurements<R: Rng + ?Sized>(
    truth: &[TruthState],
    net: &SensorNetwork,
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<Vec<Vec<Vec<Point>>>> {
    let ch = config.multiplicative_cov()?;
    let cv = config.node_noise(net)?;
    let poisson = match config.measurements.law {
        CountLaw::Poisson { rate } => {
            Some(Poisson::new(rate).map_err(|e| EotError::Config(format!("Poisson rate {rate}: {e}")))?)
        }
        CountLaw::Fixed { .. } => None,
    };
    truth
        .iter()
        .map(|t| {
            (0..net.len())
                .map(|s| {
                    if net.kind(s) == NodeKind::Communication {
                        return Ok(Vec::new());
                    }
                    let count = match (config.measurements.law, &poisson) {
                        (CountLaw::Fixed { count }, _) => count,
                        (_, Some(p)) => p.sample(rng) as usize,
                        (CountLaw::Poisson { .. }, None) => unreachable!(),
                    };
                    sample_measurements(&t.x, &t.extent, &ch, &cv[s], count, rng)
                })
                .collect()
        })
        .collect()
}

/// Prior moments for one run; missing means are drawn around the initial truth.
pub fn draw_prior<R: Rng + ?Sized>(config: &ScenarioConfig, initial: &TruthState, rng: &mut R) -> Result<PriorMoments> {
    let (cx, cp) = config.prior_covariances()?;
    let x_hat = match &config.prior.kinematic_mean {
        Some(m) => DVector::from_column_slice(m),
        None => {
            let factor = linalg::psd_factor(&cx, "prior kinematic covariance")?;
            let z = DVector::from_fn(cx.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
            initial.x.as_vector() + factor * z
        }
    };
    let p_hat = match &config.prior.extent_mean {
        Some(p) => Vector3::new(p[0], p[1], p[2]),
        None => {
            let factor = linalg::psd_factor(&linalg::to_dyn3(&cp), "prior extent covariance")?;
            let z = DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal));
            let d = factor * z;
            let floor = config.filter.semi_axis_floor;
            let t = initial.extent;
            Vector3::new(t.alpha() + d[0], (t.l1() + d[1]).max(floor), (t.l2() + d[2]).max(floor))
        }
    };
    Ok(PriorMoments { x_hat, cx, p_hat, cp })
}

/// Truth, prior and measurements of run `run`, reproducible from the
/// configured seed.
pub fn generate_run(config: &ScenarioConfig, net: &SensorNetwork, run: usize) -> Result<ScenarioRun> {
    let truth = generate_truth(config)?;
    let mut rng = run_rng(config.seed, run);
    let prior = draw_prior(config, &truth[0], &mut rng)?;
    let measurements = generate_measurements(&truth, net, config, &mut rng)?;
    Ok(ScenarioRun {
        run,
        seed: config.seed,
        truth,
        measurements,
        prior,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{preset, NetworkSpec};
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn two_point_config() -> ScenarioConfig {
        let mut cfg = preset("s2").unwrap();
        cfg.trajectory = TrajectorySpec::Waypoints {
            waypoints: vec![[0.0, 0.0], [10_000.0, 0.0]],
            speed: 50_000.0 / 3600.0,
        };
        cfg
    }

    #[test]
    fn stationary_truth_is_constant() {
        let mut cfg = preset("s1").unwrap();
        cfg.steps = 5;
        let truth = generate_truth(&cfg).unwrap();
        assert_eq!(truth.len(), 5);
        assert!(truth.windows(2).all(|w| w[0] == w[1]));
        assert_relative_eq!(truth[0].extent.alpha(), std::f64::consts::FRAC_PI_4);
    }

    #[test]
    fn straight_path_spacing() {
        let truth = generate_truth(&two_point_config()).unwrap();
        for w in truth.windows(2) {
            let d = (w[1].x.position() - w[0].x.position()).norm();
            assert_relative_eq!(d, 138.888_888_888_888_9, epsilon = 1e-9);
        }
        assert_relative_eq!(truth[3].x.velocity().unwrap().x, 50_000.0 / 3600.0, epsilon = 1e-12);
    }

    #[test]
    fn heading_follows_segments() {
        let mut cfg = preset("s2").unwrap();
        cfg.scan_time = 1.0;
        cfg.trajectory = TrajectorySpec::Waypoints {
            waypoints: vec![[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]],
            speed: 1.0,
        };
        cfg.steps = 30;
        let truth = generate_truth(&cfg).unwrap();
        assert_relative_eq!(truth[5].extent.alpha(), 0.0);
        assert_relative_eq!(truth[10].extent.alpha(), FRAC_PI_2);
        assert_relative_eq!(truth[10].x.position(), Point::new(10.0, 0.0));
        assert_relative_eq!(truth[15].x.position(), Point::new(10.0, 5.0), epsilon = 1e-12);
        // Past the last waypoint the object keeps going.
        assert_relative_eq!(truth[25].x.position(), Point::new(10.0, 15.0), epsilon = 1e-12);
    }

    #[test]
    fn fixed_counts_and_silent_comm_nodes() {
        let cfg = preset("s1").unwrap();
        let net = cfg.network.build().unwrap();
        let run = generate_run(&cfg, &net, 0).unwrap();
        for (s, ys) in run.measurements[0].iter().enumerate() {
            match net.kind(s) {
                NodeKind::Sensor => assert_eq!(ys.len(), 100),
                NodeKind::Communication => assert!(ys.is_empty()),
            }
        }
        assert_eq!(run.prior.x_hat, DVector::from_column_slice(&[1.0, 1.0]));
    }

    #[test]
    fn poisson_counts_have_the_configured_mean() {
        let p = Poisson::new(5.0).unwrap();
        let mut rng = run_rng(11, 0);
        let n = 10_000;
        let mean = (0..n).map(|_| p.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 5.0).abs() <= 3.0 * (5.0f64 / n as f64).sqrt());
    }

    #[test]
    fn same_seed_same_run() {
        let cfg = preset("s2").unwrap();
        let net = cfg.network.build().unwrap();
        let a = generate_run(&cfg, &net, 3).unwrap();
        let b = generate_run(&cfg, &net, 3).unwrap();
        assert_eq!(a, b);
        let c = generate_run(&cfg, &net, 4).unwrap();
        assert_ne!(a.measurements, c.measurements);
    }

    #[test]
    fn sample_covariance_matches_the_model() {
        let mut cfg = preset("s2").unwrap();
        cfg.steps = 1;
        cfg.measurements.law = CountLaw::Fixed { count: 200_000 };
        cfg.network = NetworkSpec::Complete { nodes: 2, sensors: Some(vec![0]) };
        let net = cfg.network.build().unwrap();
        let run = generate_run(&cfg, &net, 0).unwrap();
        let ys = &run.measurements[0][0];
        let t = &run.truth[0];
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<Point>() / n;
        let cov = ys.iter().map(|y| (y - mean) * (y - mean).transpose()).sum::<nalgebra::Matrix2<f64>>() / (n - 1.0);
        let s = crate::geometry::shape_matrix(&t.extent);
        let expected = s * cfg.multiplicative_cov().unwrap() * s.transpose() + cfg.node_noise(&net).unwrap()[0];
        for (a, b) in cov.iter().zip(expected.iter()) {
            assert!((a - b).abs() <= 0.05 * expected.abs().max(), "{cov} vs {expected}");
        }
        assert!((mean - t.x.position()).norm() < 1.0);
    }
}
