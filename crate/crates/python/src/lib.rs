//! Python bindings: extent geometry, networks, scenarios, trackers and metrics.

use eot_core::config::{preset, CountLaw, NetworkSpec, ScenarioConfig};
use eot_core::consensus::{metropolis_weights, SensorNetwork};
use eot_core::diagnostics::{self, record_rows, OSPA_CUTOFF, OSPA_ORDER};
use eot_core::scenario::generate_run;
use eot_core::{geometry, EotError, Experiment, FilterKind, NodeOutput, OmegaMode};
use nalgebra::{DVector, Vector3};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

type Pt = (f64, f64);
type Row = (usize, usize, i64, &'static str, f64);

fn err(e: EotError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn point(p: Pt) -> geometry::Point {
    geometry::Point::new(p.0, p.1)
}

fn rows_of(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[pyclass(frozen, skip_from_py_object, name = "Extent")]
#[derive(Clone)]
struct PyExtent(geometry::Extent);

#[pymethods]
impl PyExtent {
    #[new]
    fn new(alpha: f64, l1: f64, l2: f64) -> PyResult<Self> {
        geometry::Extent::new(alpha, l1, l2).map(Self).map_err(err)
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha()
    }

    #[getter]
    fn l1(&self) -> f64 {
        self.0.l1()
    }

    #[getter]
    fn l2(&self) -> f64 {
        self.0.l2()
    }

    /// `S = Rot(alpha) diag(l1, l2)` as a row-major nested list.
    fn shape_matrix(&self) -> [[f64; 2]; 2] {
        let s = geometry::shape_matrix(&self.0);
        [[s[(0, 0)], s[(0, 1)]], [s[(1, 0)], s[(1, 1)]]]
    }

    /// Rectangle corners for an object centred at `center`.
    fn vertices(&self, center: Pt) -> Vec<Pt> {
        geometry::extent_vertices(&point(center), &self.0).iter().map(|v| (v.x, v.y)).collect()
    }

    fn __repr__(&self) -> String {
        format!("Extent(alpha={}, l1={}, l2={})", self.0.alpha(), self.0.l1(), self.0.l2())
    }
}

#[pyclass(frozen, skip_from_py_object, name = "Network")]
#[derive(Clone)]
struct PyNetwork(SensorNetwork);

#[pymethods]
impl PyNetwork {
    /// The shipped 20-node evaluation layout.
    #[staticmethod]
    fn grid() -> PyResult<Self> {
        eot_core::grid_network().map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (nodes, sensors=None))]
    fn complete(nodes: usize, sensors: Option<Vec<usize>>) -> PyResult<Self> {
        NetworkSpec::Complete { nodes, sensors }.build().map(Self).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn sensors(&self) -> Vec<usize> {
        self.0.sensor_indices()
    }

    fn neighbors(&self, node: usize) -> PyResult<Vec<usize>> {
        if node >= self.0.len() {
            return Err(PyValueError::new_err(format!("node {node} out of range")));
        }
        Ok(self.0.neighbors(node).to_vec())
    }

    fn positions(&self) -> Vec<Pt> {
        self.0.positions().iter().map(|p| (p.x, p.y)).collect()
    }

    fn metropolis_weights(&self) -> Vec<Vec<f64>> {
        rows_of(metropolis_weights(&self.0).matrix())
    }
}

#[pyclass(skip_from_py_object, name = "Scenario")]
#[derive(Clone)]
struct PyScenario(ScenarioConfig);

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        preset(name).map(Self).map_err(err)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        ScenarioConfig::from_toml_str(text).map(Self).map_err(err)
    }

    fn to_toml(&self) -> PyResult<String> {
        self.0.to_toml_string().map_err(err)
    }

    /// Returns a copy with the given overrides applied.
    #[pyo3(signature = (*, filter=None, consensus_iterations=None, omega=None, runs=None, steps=None, seed=None, rate=None, count=None))]
    #[allow(clippy::too_many_arguments)]
    fn with_overrides(
        &self,
        filter: Option<&str>,
        consensus_iterations: Option<usize>,
        omega: Option<&str>,
        runs: Option<usize>,
        steps: Option<usize>,
        seed: Option<u64>,
        rate: Option<f64>,
        count: Option<usize>,
    ) -> PyResult<Self> {
        let mut c = self.0.clone();
        if let Some(f) = filter {
            c.filter.kind = f.parse::<FilterKind>().map_err(err)?;
        }
        if let Some(l) = consensus_iterations {
            c.filter.consensus_iterations = l;
        }
        if let Some(w) = omega {
            w.parse::<OmegaMode>().map_err(err)?;
            c.filter.omega = w.to_string();
        }
        if let Some(r) = runs {
            c.runs = r;
        }
        if let Some(s) = steps {
            c.steps = s;
        }
        if let Some(s) = seed {
            c.seed = s;
        }
        match (rate, count) {
            (Some(_), Some(_)) => return Err(PyValueError::new_err("rate and count are mutually exclusive")),
            (Some(rate), None) => c.measurements.law = CountLaw::Poisson { rate },
            (None, Some(count)) => c.measurements.law = CountLaw::Fixed { count },
            (None, None) => {}
        }
        c.validate().map_err(err)?;
        Ok(Self(c))
    }

    #[getter]
    fn name(&self) -> &str {
        &self.0.name
    }

    #[getter]
    fn filter(&self) -> &'static str {
        self.0.filter.kind.name()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.0.steps
    }

    #[getter]
    fn runs(&self) -> usize {
        self.0.runs
    }

    fn network(&self) -> PyResult<PyNetwork> {
        self.0.network.build().map(PyNetwork).map_err(err)
    }

    /// Truth and measurements of one Monte Carlo run.
    fn simulate<'py>(&self, py: Python<'py>, run: usize) -> PyResult<Bound<'py, PyDict>> {
        let net = self.0.network.build().map_err(err)?;
        let r = generate_run(&self.0, &net, run).map_err(err)?;
        let d = PyDict::new(py);
        let truth: Vec<(Vec<f64>, PyExtent)> = r
            .truth
            .iter()
            .map(|t| (t.x.as_vector().iter().copied().collect(), PyExtent(t.extent)))
            .collect();
        let meas: Vec<Vec<Vec<Pt>>> = r
            .measurements
            .iter()
            .map(|step| step.iter().map(|node| node.iter().map(|p| (p.x, p.y)).collect()).collect())
            .collect();
        d.set_item("truth", truth)?;
        d.set_item("measurements", meas)?;
        Ok(d)
    }

    /// Runs all Monte Carlo runs and returns `(run, step, node, metric, value)` rows.
    fn run_metrics(&self, py: Python<'_>) -> PyResult<Vec<Row>> {
        let cfg = self.0.clone();
        py.detach(move || {
            let exp = Experiment::new(cfg.clone())?;
            let mut rows = Vec::new();
            for rec in exp.simulate_runs()? {
                rows.extend(record_rows(&cfg, &rec)?.into_iter().map(|r| (r.run, r.step, r.node, r.metric, r.value)));
            }
            Ok(rows)
        })
        .map_err(err)
    }
}

fn output_dict<'py>(py: Python<'py>, o: &NodeOutput) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("x", o.x_hat.iter().copied().collect::<Vec<_>>())?;
    d.set_item("cx", rows_of(&o.cx))?;
    d.set_item("p", o.p_hat.iter().copied().collect::<Vec<_>>())?;
    d.set_item("cp", rows_of(&eot_core::linalg::to_dyn3(&o.cp)))?;
    d.set_item("extent", PyExtent(o.extent))?;
    Ok(d)
}

#[pyclass(name = "Tracker")]
struct PyTracker {
    inner: eot_core::Tracker,
    floor: f64,
}

#[pymethods]
impl PyTracker {
    /// Tracker for `scenario`, started from the prior drawn for `run`.
    #[new]
    #[pyo3(signature = (scenario, run=0))]
    fn new(scenario: &PyScenario, run: usize) -> PyResult<Self> {
        let exp = Experiment::new(scenario.0.clone()).map_err(err)?;
        let r = generate_run(&scenario.0, &exp.network, run).map_err(err)?;
        let prior = Experiment::prior_estimate(&r.prior).map_err(err)?;
        let floor = exp.filter.semi_axis_floor;
        let inner = eot_core::Tracker::new(exp.filter, exp.network, exp.consensus, prior).map_err(err)?;
        Ok(Self { inner, floor })
    }

    /// Processes one scan; `measurements[node]` lists that node's points.
    fn step<'py>(&mut self, py: Python<'py>, measurements: Vec<Vec<Pt>>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let batch: Vec<Vec<geometry::Point>> =
            measurements.into_iter().map(|node| node.into_iter().map(point).collect()).collect();
        let states = self.inner.step(&batch).map_err(err)?;
        states
            .iter()
            .map(|s| output_dict(py, &s.output(self.floor).map_err(err)?))
            .collect()
    }
}

/// Gaussian Wasserstein distance between two elliptic extents.
#[pyfunction]
fn gwd(m1: Pt, p1: &PyExtent, m2: Pt, p2: &PyExtent) -> f64 {
    diagnostics::gwd(&point(m1), &p1.0, &point(m2), &p2.0)
}

/// OSPA distance between the corner sets of two rectangles.
#[pyfunction]
#[pyo3(signature = (m1, p1, m2, p2, cutoff=OSPA_CUTOFF, order=OSPA_ORDER))]
fn ospa(m1: Pt, p1: &PyExtent, m2: Pt, p2: &PyExtent, cutoff: f64, order: f64) -> f64 {
    let a = geometry::extent_vertices(&point(m1), &p1.0);
    let b = geometry::extent_vertices(&point(m2), &p2.0);
    diagnostics::ospa_vertices(&a, &b, cutoff, order)
}

#[pyfunction]
fn acee(estimates: Vec<Vec<f64>>) -> PyResult<f64> {
    let v: Vec<DVector<f64>> = estimates.into_iter().map(DVector::from_vec).collect();
    diagnostics::acee(&v).map_err(err)
}

/// Two-sided chi-square bounds for the NEES averaged over `runs`.
#[pyfunction]
#[pyo3(signature = (dim, runs, confidence=0.99))]
fn nees_bounds(dim: usize, runs: usize, confidence: f64) -> PyResult<(f64, f64)> {
    diagnostics::nees_bounds(dim, runs, confidence).map_err(err)
}

#[pyfunction]
fn semi_axis_errors(estimate: &PyExtent, truth: &PyExtent) -> (f64, f64) {
    diagnostics::semi_axis_errors(&estimate.0, &truth.0)
}

/// Extent from a raw estimate `[alpha, l1, l2]`, flooring the semi-axes.
#[pyfunction]
#[pyo3(signature = (p, floor=1e-3))]
fn extent_from_estimate(p: [f64; 3], floor: f64) -> PyResult<PyExtent> {
    geometry::Extent::from_estimate(&Vector3::from(p), floor).map(PyExtent).map_err(err)
}

#[pymodule]
fn eot(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyExtent>()?;
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyTracker>()?;
    m.add_function(wrap_pyfunction!(gwd, m)?)?;
    m.add_function(wrap_pyfunction!(ospa, m)?)?;
    m.add_function(wrap_pyfunction!(acee, m)?)?;
    m.add_function(wrap_pyfunction!(nees_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(semi_axis_errors, m)?)?;
    m.add_function(wrap_pyfunction!(extent_from_estimate, m)?)?;
    m.add("PRESETS", eot_core::config::PRESET_NAMES.to_vec())?;
    Ok(())
}
