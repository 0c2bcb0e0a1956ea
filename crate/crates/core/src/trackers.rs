//! Centralized (CEOT), consensus-on-information (CI) and
//! consensus-on-measurement (CM) extended object trackers.
//!
//! All three process a scan sequentially: measurement index `i` is handled
//! with both linear models rebuilt at the estimates left by index `i − 1`,
//! and the kinematic and extent corrections at index `i` are both computed
//! from that same pair of estimates.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::consensus::{consensus_rounds, ConsensusMatrix, NodeKind, SensorNetwork};
use crate::error::{EotError, Result};
use crate::geometry::{Extent, KinematicState, Point, DEFAULT_SEMI_AXIS_FLOOR};
use crate::info_filter::{innovation_from_noise_cov, InformationState, InnovationPair};
use crate::linalg;
use crate::linearization::{centered_pseudo_measurement, linearize, pseudo_measurement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Ceot,
    Ci,
    Cm,
}

impl FilterKind {
    pub fn is_distributed(self) -> bool {
        !matches!(self, FilterKind::Ceot)
    }

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Ceot => "ceot",
            FilterKind::Ci => "ci",
            FilterKind::Cm => "cm",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = EotError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ceot" => Ok(FilterKind::Ceot),
            "ci" => Ok(FilterKind::Ci),
            "cm" => Ok(FilterKind::Cm),
            other => Err(EotError::Config(format!("unknown filter `{other}` (expected ceot, ci or cm)"))),
        }
    }
}

/// Weight `ω` applied to the consensus-averaged innovations in CM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OmegaMode {
    /// `ω = |G|`, exact compensation once consensus has converged.
    CardinalityG,
    Fixed(f64),
}

impl OmegaMode {
    pub fn value(self, network_size: usize) -> f64 {
        match self {
            OmegaMode::CardinalityG => network_size as f64,
            OmegaMode::Fixed(w) => w,
        }
    }
}

impl FromStr for OmegaMode {
    type Err = EotError;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("g") {
            return Ok(OmegaMode::CardinalityG);
        }
        s.parse::<f64>()
            .ok()
            .filter(|w| w.is_finite() && *w >= 0.0)
            .map(OmegaMode::Fixed)
            .ok_or_else(|| EotError::Config(format!("invalid omega `{s}` (expected G or a nonnegative number)")))
    }
}

/// Linear evolution of kinematics and extent with their process-noise
/// information matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    pub fx: DMatrix<f64>,
    pub fp: DMatrix<f64>,
    pub ww_x: DMatrix<f64>,
    pub ww_p: DMatrix<f64>,
}

/// Nearly-constant-velocity transition for `[m, ṁ]`.
pub fn ncv_transition(scan_time: f64) -> DMatrix<f64> {
    let t = scan_time;
    #[rustfmt::skip]
    let f = DMatrix::from_row_slice(4, 4, &[
        1.0, 0.0, t,   0.0,
        0.0, 1.0, 0.0, t,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    ]);
    f
}

impl MotionModel {
    /// Builds the model from process-noise covariances; both must be PD.
    pub fn new(fx: DMatrix<f64>, fp: DMatrix<f64>, cxw: &DMatrix<f64>, cpw: &DMatrix<f64>) -> Result<Self> {
        if fx.shape() != cxw.shape() || fp.shape() != (3, 3) || cpw.shape() != (3, 3) {
            return Err(EotError::DimensionMismatch {
                context: "motion model",
                expected: format!("Fx {:?} matching Cxw, 3x3 extent blocks", fx.shape()),
                actual: format!("Cxw {:?}, Fp {:?}, Cpw {:?}", cxw.shape(), fp.shape(), cpw.shape()),
            });
        }
        Ok(Self {
            ww_x: linalg::spd_inverse(cxw, "kinematic process noise covariance")?,
            ww_p: linalg::spd_inverse(cpw, "extent process noise covariance")?,
            fx,
            fp,
        })
    }

    /// NCV kinematics (dimension 4) or a random walk (other dimensions),
    /// identity extent transition.
    pub fn nearly_constant_velocity(scan_time: f64, cxw: &DMatrix<f64>, cpw: &DMatrix<f64>) -> Result<Self> {
        let fx = if cxw.nrows() == 4 {
            ncv_transition(scan_time)
        } else {
            DMatrix::identity(cxw.nrows(), cxw.nrows())
        };
        Self::new(fx, DMatrix::identity(3, 3), cxw, cpw)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub kind: FilterKind,
    /// Consensus iterations `L` per measurement index.
    pub consensus_iterations: usize,
    pub omega: OmegaMode,
    /// Multiplicative noise covariance `Ch`.
    pub ch: Matrix2<f64>,
    /// Additive measurement noise `Cv` of every node, indexed by node.
    pub measurement_noise: Vec<Matrix2<f64>>,
    /// `None` for a static object: no time update.
    pub motion: Option<MotionModel>,
    pub semi_axis_floor: f64,
}

impl FilterConfig {
    pub fn new(kind: FilterKind, ch: Matrix2<f64>, measurement_noise: Vec<Matrix2<f64>>) -> Self {
        Self {
            kind,
            consensus_iterations: 1,
            omega: OmegaMode::CardinalityG,
            ch,
            measurement_noise,
            motion: None,
            semi_axis_floor: DEFAULT_SEMI_AXIS_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.is_distributed() && self.consensus_iterations < 1 {
            return Err(EotError::Config("distributed filters need at least one consensus iteration".into()));
        }
        linalg::check_psd2(&self.ch, "multiplicative noise covariance")?;
        for cv in &self.measurement_noise {
            linalg::check_psd2(cv, "measurement noise covariance")?;
        }
        if !(self.semi_axis_floor > 0.0) {
            return Err(EotError::Config(format!("semi-axis floor must be positive, got {}", self.semi_axis_floor)));
        }
        Ok(())
    }
}

/// Kinematic and extent information states held by one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEstimate {
    pub kin: InformationState,
    pub ext: InformationState,
}

/// Moments at which a node linearizes its measurement models.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationPoint {
    pub x_hat: DVector<f64>,
    pub cx: DMatrix<f64>,
    pub p_hat: Vector3<f64>,
    pub cp: Matrix3<f64>,
}

/// Moment-form output of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeOutput {
    pub x_hat: DVector<f64>,
    pub cx: DMatrix<f64>,
    /// Raw extent estimate (orientation not wrapped).
    pub p_hat: Vector3<f64>,
    pub cp: Matrix3<f64>,
    pub extent: Extent,
}

impl NodeOutput {
    pub fn position(&self) -> Point {
        Point::new(self.x_hat[0], self.x_hat[1])
    }

    pub fn kinematic_state(&self) -> Result<KinematicState> {
        KinematicState::new(self.x_hat.clone())
    }
}

impl NodeEstimate {
    pub fn from_moments(x_hat: &DVector<f64>, cx: &DMatrix<f64>, p_hat: &Vector3<f64>, cp: &Matrix3<f64>) -> Result<Self> {
        Ok(Self {
            kin: InformationState::from_moments(x_hat, cx)?,
            ext: InformationState::from_moments(&DVector::from_column_slice(p_hat.as_slice()), &linalg::to_dyn3(cp))?,
        })
    }

    pub fn kinematic_dim(&self) -> usize {
        self.kin.dim()
    }

    pub fn linearization_point(&self) -> Result<LinearizationPoint> {
        let (x_hat, cx) = self.kin.to_moments()?;
        let (p, cp) = self.ext.to_moments()?;
        Ok(LinearizationPoint {
            x_hat,
            cx,
            p_hat: Vector3::new(p[0], p[1], p[2]),
            cp: linalg::to_mat3(&cp),
        })
    }

    pub fn output(&self, semi_axis_floor: f64) -> Result<NodeOutput> {
        let lp = self.linearization_point()?;
        let extent = Extent::from_estimate(&lp.p_hat, semi_axis_floor)?;
        Ok(NodeOutput {
            x_hat: lp.x_hat,
            cx: lp.cx,
            p_hat: lp.p_hat,
            cp: lp.cp,
            extent,
        })
    }

    fn correct(&self, kin: &InnovationPair, ext: &InnovationPair, weight: f64) -> NodeEstimate {
        NodeEstimate {
            kin: self.kin.correct(kin, weight),
            ext: self.ext.correct(ext, weight),
        }
    }

    /// Clamps estimated semi-axes to `floor` by rewriting the information vector.
    fn enforce_semi_axis_floor(&mut self, floor: f64) -> Result<()> {
        let mut p = self.ext.mean()?;
        if p[1] >= floor && p[2] >= floor {
            return Ok(());
        }
        p[1] = p[1].max(floor);
        p[2] = p[2].max(floor);
        self.ext.q = &self.ext.omega * p;
        Ok(())
    }

    fn predict(&self, motion: Option<&MotionModel>) -> Result<NodeEstimate> {
        match motion {
            None => Ok(self.clone()),
            Some(m) => Ok(NodeEstimate {
                kin: self.kin.predict(&m.fx, &m.ww_x)?,
                ext: self.ext.predict(&m.fp, &m.ww_p)?,
            }),
        }
    }
}

/// Local innovation pairs `(Hᵀ·Vˣ·y, Hᵀ·Vˣ·H)` and `(M̂ᵀ·Vᵖ·Ỹ, M̂ᵀ·Vᵖ·M̂)` of one
/// measurement, linearized at `lp`.
pub fn local_innovations(
    lp: &LinearizationPoint,
    y: &Point,
    ch: &Matrix2<f64>,
    cv: &Matrix2<f64>,
    semi_axis_floor: f64,
) -> Result<(InnovationPair, InnovationPair)> {
    let lin = linearize(&lp.x_hat, &lp.cx, &lp.p_hat, &lp.cp, ch, cv, semi_axis_floor)?;
    let z = DVector::from_column_slice(y.as_slice());
    let kin = innovation_from_noise_cov(&lin.kinematic.h, &linalg::to_dyn2(&lin.kinematic.rx), &z)?;

    let ext_model = &lin.extent;
    let pseudo = pseudo_measurement(y, &lp.x_hat);
    let centered = centered_pseudo_measurement(&pseudo, &ext_model.cy, &ext_model.m, &lp.p_hat);
    let ext = innovation_from_noise_cov(
        &linalg::to_dyn3(&ext_model.m),
        &linalg::to_dyn3(&ext_model.rp),
        &DVector::from_column_slice(centered.as_slice()),
    )?;
    Ok((kin, ext))
}

/// Hook into the sequential loop, used to instrument tests.
pub trait StepObserver {
    fn linearized(&mut self, _node: usize, _index: usize, _point: &LinearizationPoint) {}
    fn corrected(&mut self, _node: usize, _index: usize, _estimate: &NodeEstimate) {}
}

pub struct NoObserver;

impl StepObserver for NoObserver {}

/// Posterior after the sequential corrections and the prior for the next scan.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome<T> {
    pub posterior: T,
    pub predicted: T,
}

fn noise_of(config: &FilterConfig, node: usize) -> Result<&Matrix2<f64>> {
    config.measurement_noise.get(node).ok_or_else(|| EotError::DimensionMismatch {
        context: "measurement noise",
        expected: format!("a covariance for node {node}"),
        actual: format!("{} configured", config.measurement_noise.len()),
    })
}

fn batch_length(measurements: &[Vec<Point>]) -> usize {
    measurements.iter().map(Vec::len).max().unwrap_or(0)
}

fn check_network_inputs(
    states: &[NodeEstimate],
    measurements: &[Vec<Point>],
    net: &SensorNetwork,
    pi: &ConsensusMatrix,
) -> Result<()> {
    let n = net.len();
    if states.len() != n || measurements.len() != n || pi.len() != n {
        return Err(EotError::DimensionMismatch {
            context: "network step",
            expected: format!("{n} states, measurement lists and consensus rows"),
            actual: format!("{}, {}, {}", states.len(), measurements.len(), pi.len()),
        });
    }
    if let Some(node) = (0..n).find(|&s| net.kind(s) == NodeKind::Communication && !measurements[s].is_empty()) {
        return Err(EotError::Config(format!("communication node {node} received measurements")));
    }
    Ok(())
}

/// One scan of the centralized filter.
pub fn ceot_step(state: &NodeEstimate, measurements: &[Vec<Point>], config: &FilterConfig) -> Result<StepOutcome<NodeEstimate>> {
    ceot_step_observed(state, measurements, config, &mut NoObserver)
}

pub fn ceot_step_observed(
    state: &NodeEstimate,
    measurements: &[Vec<Point>],
    config: &FilterConfig,
    observer: &mut dyn StepObserver,
) -> Result<StepOutcome<NodeEstimate>> {
    let mut est = state.clone();
    let kin_dim = est.kinematic_dim();
    for i in 0..batch_length(measurements) {
        let run = |est: &NodeEstimate, observer: &mut dyn StepObserver| -> Result<NodeEstimate> {
            let lp = est.linearization_point()?;
            observer.linearized(0, i, &lp);
            let mut kin_sum = InnovationPair::zeros(kin_dim);
            let mut ext_sum = InnovationPair::zeros(3);
            for (node, ys) in measurements.iter().enumerate() {
                if let Some(y) = ys.get(i) {
                    let (k, e) = local_innovations(&lp, y, &config.ch, noise_of(config, node)?, config.semi_axis_floor)?;
                    kin_sum.accumulate(&k);
                    ext_sum.accumulate(&e);
                }
            }
            let mut next = est.correct(&kin_sum, &ext_sum, 1.0);
            next.enforce_semi_axis_floor(config.semi_axis_floor)?;
            Ok(next)
        };
        est = run(&est, observer).map_err(|e| e.at_index(0, i))?;
        observer.corrected(0, i, &est);
    }
    let predicted = est.predict(config.motion.as_ref())?;
    Ok(StepOutcome {
        posterior: est,
        predicted,
    })
}

/// One scan of the consensus-on-information filter.
pub fn ci_step(
    states: &[NodeEstimate],
    measurements: &[Vec<Point>],
    net: &SensorNetwork,
    pi: &ConsensusMatrix,
    config: &FilterConfig,
) -> Result<StepOutcome<Vec<NodeEstimate>>> {
    ci_step_observed(states, measurements, net, pi, config, &mut NoObserver)
}

pub fn ci_step_observed(
    states: &[NodeEstimate],
    measurements: &[Vec<Point>],
    net: &SensorNetwork,
    pi: &ConsensusMatrix,
    config: &FilterConfig,
    observer: &mut dyn StepObserver,
) -> Result<StepOutcome<Vec<NodeEstimate>>> {
    check_network_inputs(states, measurements, net, pi)?;
    let mut ests = states.to_vec();
    for i in 0..batch_length(measurements) {
        let body = |ests: &mut Vec<NodeEstimate>, observer: &mut dyn StepObserver| -> Result<()> {
            for (s, est) in ests.iter_mut().enumerate() {
                let Some(y) = measurements[s].get(i) else { continue };
                let lp = est.linearization_point()?;
                observer.linearized(s, i, &lp);
                let (k, e) = local_innovations(&lp, y, &config.ch, noise_of(config, s)?, config.semi_axis_floor)?;
                *est = est.correct(&k, &e, 1.0);
            }
            let packets: Vec<(InformationState, InformationState)> =
                ests.iter().map(|e| (e.kin.clone(), e.ext.clone())).collect();
            let mixed = consensus_rounds(&packets, pi, config.consensus_iterations)?;
            for (est, (kin, ext)) in ests.iter_mut().zip(mixed) {
                est.kin = InformationState { omega: linalg::symmetrize(&kin.omega), q: kin.q };
                est.ext = InformationState { omega: linalg::symmetrize(&ext.omega), q: ext.q };
                est.enforce_semi_axis_floor(config.semi_axis_floor)?;
            }
            Ok(())
        };
        body(&mut ests, observer).map_err(|e| e.at_index(0, i))?;
        for (s, est) in ests.iter().enumerate() {
            observer.corrected(s, i, est);
        }
    }
    let predicted = ests
        .iter()
        .map(|e| e.predict(config.motion.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok(StepOutcome {
        posterior: ests,
        predicted,
    })
}

/// One scan of the consensus-on-measurement filter.
pub fn cm_step(
    states: &[NodeEstimate],
    measurements: &[Vec<Point>],
    net: &SensorNetwork,
    pi: &ConsensusMatrix,
    config: &FilterConfig,
) -> Result<StepOutcome<Vec<NodeEstimate>>> {
    cm_step_observed(states, measurements, net, pi, config, &mut NoObserver)
}

pub fn cm_step_observed(
    states: &[NodeEstimate],
    measurements: &[Vec<Point>],
    net: &SensorNetwork,
    pi: &ConsensusMatrix,
    config: &FilterConfig,
    observer: &mut dyn StepObserver,
) -> Result<StepOutcome<Vec<NodeEstimate>>> {
    check_network_inputs(states, measurements, net, pi)?;
    let omega = config.omega.value(net.len());
    let mut ests = states.to_vec();
    let kin_dim = ests.first().map_or(0, NodeEstimate::kinematic_dim);
    for i in 0..batch_length(measurements) {
        let body = |ests: &mut Vec<NodeEstimate>, observer: &mut dyn StepObserver| -> Result<()> {
            let mut local = Vec::with_capacity(ests.len());
            for (s, est) in ests.iter().enumerate() {
                match measurements[s].get(i) {
                    Some(y) => {
                        let lp = est.linearization_point()?;
                        observer.linearized(s, i, &lp);
                        local.push(local_innovations(&lp, y, &config.ch, noise_of(config, s)?, config.semi_axis_floor)?);
                    }
                    None => local.push((InnovationPair::zeros(kin_dim), InnovationPair::zeros(3))),
                }
            }
            let mixed = consensus_rounds(&local, pi, config.consensus_iterations)?;
            for (est, (k, e)) in ests.iter_mut().zip(mixed.iter()) {
                *est = est.correct(k, e, omega);
                est.enforce_semi_axis_floor(config.semi_axis_floor)?;
            }
            Ok(())
        };
        body(&mut ests, observer).map_err(|e| e.at_index(0, i))?;
        for (s, est) in ests.iter().enumerate() {
            observer.corrected(s, i, est);
        }
    }
    let predicted = ests
        .iter()
        .map(|e| e.predict(config.motion.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok(StepOutcome {
        posterior: ests,
        predicted,
    })
}

/// Stateful driver over consecutive scans for any of the three filters.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: FilterConfig,
    network: SensorNetwork,
    consensus: ConsensusMatrix,
    /// One state for CEOT, one per node otherwise.
    states: Vec<NodeEstimate>,
    step: usize,
}

impl Tracker {
    pub fn new(config: FilterConfig, network: SensorNetwork, consensus: ConsensusMatrix, prior: NodeEstimate) -> Result<Self> {
        config.validate()?;
        if config.measurement_noise.len() != network.len() {
            return Err(EotError::DimensionMismatch {
                context: "tracker",
                expected: format!("{} measurement noise covariances", network.len()),
                actual: config.measurement_noise.len().to_string(),
            });
        }
        let copies = if config.kind.is_distributed() { network.len() } else { 1 };
        Ok(Self {
            states: vec![prior; copies],
            config,
            network,
            consensus,
            step: 0,
        })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn states(&self) -> &[NodeEstimate] {
        &self.states
    }

    /// Processes one scan and returns the per-node posteriors.
    pub fn step(&mut self, measurements: &[Vec<Point>]) -> Result<Vec<NodeEstimate>> {
        let step = self.step;
        let relabel = |e: EotError| match e {
            EotError::Step { index, source, .. } => EotError::Step { step, index, source },
            other => other,
        };
        let posterior = match self.config.kind {
            FilterKind::Ceot => {
                let out = ceot_step(&self.states[0], measurements, &self.config).map_err(relabel)?;
                self.states = vec![out.predicted];
                vec![out.posterior]
            }
            FilterKind::Ci => {
                let out = ci_step(&self.states, measurements, &self.network, &self.consensus, &self.config).map_err(relabel)?;
                self.states = out.predicted;
                out.posterior
            }
            FilterKind::Cm => {
                let out = cm_step(&self.states, measurements, &self.network, &self.consensus, &self.config).map_err(relabel)?;
                self.states = out.predicted;
                out.posterior
            }
        };
        self.step += 1;
        Ok(posterior)
    }
}
