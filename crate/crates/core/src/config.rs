//! Scenario configuration files and the shipped presets.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::consensus::{build_network, complete_network, NodeKind, SensorNetwork};
use crate::error::{EotError, Result};
use crate::geometry::{Extent, Point, ShapeKind, DEFAULT_SEMI_AXIS_FLOOR};
use crate::linalg;
use crate::trackers::{FilterConfig, FilterKind, MotionModel, OmegaMode};

const S1: &str = include_str!("../presets/s1.toml");
const S2: &str = include_str!("../presets/s2.toml");
const S3: &str = include_str!("../presets/s3.toml");
const NETWORK_V1: &str = include_str!("../presets/network_v1.toml");

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 3] = ["s1", "s2", "s3"];

/// Covariance written either as its diagonal or as a full row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovSpec {
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl CovSpec {
    pub fn dim(&self) -> usize {
        match self {
            CovSpec::Diagonal(d) => d.len(),
            CovSpec::Full(rows) => rows.len(),
        }
    }

    pub fn to_matrix(&self, name: &'static str) -> Result<DMatrix<f64>> {
        let m = match self {
            CovSpec::Diagonal(d) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
            CovSpec::Full(rows) => {
                let n = rows.len();
                if rows.iter().any(|r| r.len() != n) {
                    return Err(EotError::InvalidCovariance {
                        name,
                        reason: "rows of a full covariance must have equal length".into(),
                    });
                }
                DMatrix::from_row_iterator(n, n, rows.iter().flatten().copied())
            }
        };
        if m.nrows() == 0 {
            return Err(EotError::InvalidCovariance {
                name,
                reason: "empty".into(),
            });
        }
        linalg::check_psd(&m, name)?;
        Ok(m)
    }

    pub fn to_matrix2(&self, name: &'static str) -> Result<Matrix2<f64>> {
        let m = self.to_matrix(name)?;
        expect_dim(name, &m, 2)?;
        Ok(linalg::top_left2(&m))
    }

    pub fn to_matrix3(&self, name: &'static str) -> Result<Matrix3<f64>> {
        let m = self.to_matrix(name)?;
        expect_dim(name, &m, 3)?;
        Ok(linalg::to_mat3(&m))
    }
}

fn expect_dim(name: &'static str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    if m.nrows() != n {
        return Err(EotError::DimensionMismatch {
            context: name,
            expected: format!("{n}x{n}"),
            actual: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub shape: ShapeKind,
    pub semi_axes: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TrajectorySpec {
    Stationary { position: [f64; 2], orientation: f64 },
    /// Constant speed (m/s) along the polyline, continuing on the last
    /// heading once the final waypoint is passed.
    Waypoints { waypoints: Vec<[f64; 2]>, speed: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum CountLaw {
    Fixed { count: usize },
    Poisson { rate: f64 },
}

// `flatten` rules out `deny_unknown_fields` here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSpec {
    #[serde(flatten)]
    pub law: CountLaw,
    pub multiplicative_cov: CovSpec,
    /// Default `Cv` for every node.
    pub noise_cov: CovSpec,
    /// Optional per-node overrides, one entry per network node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_noise_cov: Option<Vec<CovSpec>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSpec {
    pub kinematic_cov: CovSpec,
    pub extent_cov: CovSpec,
}

/// Prior moments. A missing mean is drawn per run from a Gaussian centered
/// on the initial truth with the prior covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kinematic_mean: Option<Vec<f64>>,
    pub kinematic_cov: CovSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent_mean: Option<[f64; 3]>,
    pub extent_cov: CovSpec,
}

fn default_iterations() -> usize {
    1
}

fn default_omega() -> String {
    "G".into()
}

fn default_floor() -> f64 {
    DEFAULT_SEMI_AXIS_FLOOR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub kind: FilterKind,
    #[serde(default = "default_iterations")]
    pub consensus_iterations: usize,
    /// `"G"` or a number.
    #[serde(default = "default_omega")]
    pub omega: String,
    #[serde(default = "default_floor")]
    pub semi_axis_floor: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            kind: FilterKind::Cm,
            consensus_iterations: default_iterations(),
            omega: default_omega(),
            semi_axis_floor: default_floor(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum NetworkSpec {
    /// The shipped 20-node layout.
    Grid,
    /// Fully connected graph; `sensors` defaults to every node.
    Complete {
        nodes: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sensors: Option<Vec<usize>>,
    },
    Explicit {
        positions: Vec<[f64; 2]>,
        sensors: Vec<usize>,
        radius: f64,
    },
}

impl NetworkSpec {
    pub fn build(&self) -> Result<SensorNetwork> {
        match self {
            NetworkSpec::Grid => grid_network(),
            NetworkSpec::Complete { nodes, sensors } => {
                let kinds = match sensors {
                    None => vec![NodeKind::Sensor; *nodes],
                    Some(list) => node_kinds(*nodes, list)?,
                };
                complete_network(kinds)
            }
            NetworkSpec::Explicit {
                positions,
                sensors,
                radius,
            } => {
                let kinds = node_kinds(positions.len(), sensors)?;
                build_network(positions.iter().map(|p| Point::new(p[0], p[1])).collect(), kinds, *radius)
            }
        }
    }
}

fn node_kinds(n: usize, sensors: &[usize]) -> Result<Vec<NodeKind>> {
    let mut kinds = vec![NodeKind::Communication; n];
    for &s in sensors {
        *kinds
            .get_mut(s)
            .ok_or_else(|| EotError::InvalidNetwork(format!("sensor index {s} out of range for {n} nodes")))? =
            NodeKind::Sensor;
    }
    Ok(kinds)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    version: u32,
    radius: f64,
    sensors: Vec<usize>,
    positions: Vec<[f64; 2]>,
}

/// The shipped 20-node network: 6 sensor and 14 communication nodes,
/// communication radius 2000 m.
pub fn grid_network() -> Result<SensorNetwork> {
    let file: NetworkFile =
        toml::from_str(NETWORK_V1).map_err(|e| EotError::Config(format!("network layout: {e}")))?;
    debug_assert_eq!(file.version, 1);
    NetworkSpec::Explicit {
        positions: file.positions,
        sensors: file.sensors,
        radius: file.radius,
    }
    .build()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub steps: usize,
    /// Scan time `T` in seconds.
    pub scan_time: f64,
    pub runs: usize,
    pub seed: u64,
    pub object: ObjectSpec,
    pub trajectory: TrajectorySpec,
    pub measurements: MeasurementSpec,
    /// Absent for a static object: the filters skip the time update.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process: Option<ProcessSpec>,
    pub prior: PriorSpec,
    #[serde(default)]
    pub filter: FilterSpec,
    pub network: NetworkSpec,
}

/// Prior moments shared by every node.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorMoments {
    pub x_hat: DVector<f64>,
    pub cx: DMatrix<f64>,
    pub p_hat: Vector3<f64>,
    pub cp: Matrix3<f64>,
}

pub fn preset(name: &str) -> Result<ScenarioConfig> {
    ScenarioConfig::from_toml_str(preset_text(name)?)
}

/// Raw text of a shipped preset.
pub fn preset_text(name: &str) -> Result<&'static str> {
    match name.to_ascii_lowercase().as_str() {
        "s1" => Ok(S1),
        "s2" => Ok(S2),
        "s3" => Ok(S3),
        other => Err(EotError::Config(format!(
            "unknown scenario `{other}` (expected one of {})",
            PRESET_NAMES.join(", ")
        ))),
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| EotError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EotError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| EotError::Config(e.to_string()))
    }

    pub fn kinematic_dim(&self) -> usize {
        self.prior.kinematic_cov.dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.runs == 0 {
            return Err(EotError::Config("steps and runs must be at least 1".into()));
        }
        if !(self.scan_time > 0.0) {
            return Err(EotError::Config("scan_time must be positive".into()));
        }
        Extent::new(0.0, self.object.semi_axes[0], self.object.semi_axes[1])?;
        match &self.trajectory {
            TrajectorySpec::Stationary { position, orientation } => {
                if !position.iter().chain([orientation]).all(|v| v.is_finite()) {
                    return Err(EotError::Config("stationary pose must be finite".into()));
                }
            }
            TrajectorySpec::Waypoints { waypoints, speed } => {
                if waypoints.len() < 2 {
                    return Err(EotError::Config("waypoint trajectories need at least 2 waypoints".into()));
                }
                if !(speed.is_finite() && *speed >= 0.0) {
                    return Err(EotError::Config("speed must be finite and nonnegative".into()));
                }
                if waypoints.windows(2).any(|w| w[0] == w[1]) {
                    return Err(EotError::Config("consecutive waypoints must differ".into()));
                }
            }
        }
        match self.measurements.law {
            CountLaw::Fixed { count: 0 } => {
                return Err(EotError::Config("fixed measurement count must be at least 1".into()))
            }
            CountLaw::Poisson { rate } if !(rate > 0.0 && rate.is_finite()) => {
                return Err(EotError::Config("Poisson rate must be positive".into()))
            }
            _ => {}
        }
        self.measurements.multiplicative_cov.to_matrix2("multiplicative noise covariance")?;
        self.measurements.noise_cov.to_matrix2("measurement noise covariance")?;
        let dim = self.kinematic_dim();
        if dim < 2 {
            return Err(EotError::Config("kinematic state needs at least the 2-D position".into()));
        }
        let prior = &self.prior;
        linalg::cholesky(&prior.kinematic_cov.to_matrix("prior kinematic covariance")?, "prior kinematic covariance")?;
        linalg::cholesky(
            &linalg::to_dyn3(&prior.extent_cov.to_matrix3("prior extent covariance")?),
            "prior extent covariance",
        )?;
        if let Some(m) = &prior.kinematic_mean {
            if m.len() != dim {
                return Err(EotError::DimensionMismatch {
                    context: "prior kinematic mean",
                    expected: dim.to_string(),
                    actual: m.len().to_string(),
                });
            }
        }
        if let Some(p) = &prior.extent_mean {
            Extent::new(p[0], p[1], p[2])?;
        }
        if let Some(process) = &self.process {
            let cxw = process.kinematic_cov.to_matrix("kinematic process noise covariance")?;
            if cxw.nrows() != dim {
                return Err(EotError::DimensionMismatch {
                    context: "kinematic process noise covariance",
                    expected: format!("{dim}x{dim}"),
                    actual: format!("{}x{}", cxw.nrows(), cxw.ncols()),
                });
            }
            process.extent_cov.to_matrix3("extent process noise covariance")?;
            // Information-form prediction needs invertible process noise.
            self.motion_model()?;
        }
        let net = self.network.build()?;
        if let Some(list) = &self.measurements.node_noise_cov {
            if list.len() != net.len() {
                return Err(EotError::DimensionMismatch {
                    context: "node_noise_cov",
                    expected: format!("{} entries", net.len()),
                    actual: list.len().to_string(),
                });
            }
        }
        self.node_noise(&net)?;
        self.omega()?;
        Ok(())
    }

    pub fn multiplicative_cov(&self) -> Result<Matrix2<f64>> {
        self.measurements.multiplicative_cov.to_matrix2("multiplicative noise covariance")
    }

    /// `Cv` of each node of `net`.
    pub fn node_noise(&self, net: &SensorNetwork) -> Result<Vec<Matrix2<f64>>> {
        match &self.measurements.node_noise_cov {
            Some(list) => list
                .iter()
                .map(|c| c.to_matrix2("measurement noise covariance"))
                .collect(),
            None => Ok(vec![self.measurements.noise_cov.to_matrix2("measurement noise covariance")?; net.len()]),
        }
    }

    pub fn motion_model(&self) -> Result<Option<MotionModel>> {
        self.process
            .as_ref()
            .map(|p| {
                MotionModel::nearly_constant_velocity(
                    self.scan_time,
                    &p.kinematic_cov.to_matrix("kinematic process noise covariance")?,
                    &linalg::to_dyn3(&p.extent_cov.to_matrix3("extent process noise covariance")?),
                )
            })
            .transpose()
    }

    pub fn omega(&self) -> Result<OmegaMode> {
        self.filter.omega.parse()
    }

    /// Filter configuration for `net` using the `[filter]` section.
    pub fn filter_config(&self, net: &SensorNetwork) -> Result<FilterConfig> {
        let mut cfg = FilterConfig::new(self.filter.kind, self.multiplicative_cov()?, self.node_noise(net)?);
        cfg.consensus_iterations = self.filter.consensus_iterations;
        cfg.omega = self.omega()?;
        cfg.motion = self.motion_model()?;
        cfg.semi_axis_floor = self.filter.semi_axis_floor;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn prior_covariances(&self) -> Result<(DMatrix<f64>, Matrix3<f64>)> {
        Ok((
            self.prior.kinematic_cov.to_matrix("prior kinematic covariance")?,
            self.prior.extent_cov.to_matrix3("prior extent covariance")?,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap();
            assert_eq!(cfg.name, name);
        }
        assert!(preset("s4").is_err());
    }

    #[test]
    fn preset_values() {
        let s1 = preset("s1").unwrap();
        assert_eq!(s1.kinematic_dim(), 2);
        assert!(s1.process.is_none());
        assert_eq!(s1.measurements.law, CountLaw::Fixed { count: 100 });
        let s2 = preset("s2").unwrap();
        assert_eq!(s2.kinematic_dim(), 4);
        assert_eq!(s2.measurements.law, CountLaw::Poisson { rate: 5.0 });
        let cv = s2.measurements.noise_cov.to_matrix2("cv").unwrap();
        assert_eq!(cv, Matrix2::new(200.0, 0.0, 0.0, 8.0));
    }

    #[test]
    fn grid_network_shape() {
        let net = grid_network().unwrap();
        assert_eq!(net.len(), 20);
        assert_eq!(net.sensor_indices().len(), 6);
        assert!((0..net.len()).all(|s| net.degree(s) >= 1));
    }

    #[test]
    fn round_trip_through_toml() {
        let cfg = preset("s2").unwrap();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn full_covariance_form() {
        let c = CovSpec::Full(vec![vec![2.0, 0.5], vec![0.5, 1.0]]);
        assert_eq!(c.to_matrix2("c").unwrap(), Matrix2::new(2.0, 0.5, 0.5, 1.0));
        let bad = CovSpec::Full(vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(bad.to_matrix2("c").is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        let base = preset_text("s2").unwrap();
        let few = base.replace(
            "waypoints = [[750.0, 750.0], [5250.0, 750.0], [5250.0, 3750.0]]",
            "waypoints = [[750.0, 750.0]]",
        );
        assert!(ScenarioConfig::from_toml_str(&few).is_err());
        let zero = base.replace("rate = 5.0", "rate = 0.0");
        assert!(ScenarioConfig::from_toml_str(&zero).is_err());
        let singular = base.replace("kinematic_cov = [100.0, 100.0, 1.0, 1.0]", "kinematic_cov = [0.0, 100.0, 1.0, 1.0]");
        assert!(ScenarioConfig::from_toml_str(&singular).is_err());
        let unknown = format!("extra = 1\n{base}");
        assert!(ScenarioConfig::from_toml_str(&unknown).is_err());
    }
}
