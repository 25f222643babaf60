//! Python bindings. Reports come back as plain dicts and lists.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use hlflock::analysis::{
    derive_bound_params, lemma2_bound_critical, lemma2_bound_subcritical, two_bird_product_oracle, BoundParams,
};
use hlflock::commands::{cmd_verify, CliError};
use hlflock::config::SimConfig;
use hlflock::ensemble::run_ensemble;
use hlflock::{
    simulate, FlockError, FlockState, Frame, Hierarchy, InteractionKind, InteractionModel, RngStream, Vec3,
    WeightMatrix,
};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn flock_err(e: FlockError) -> PyErr {
    match e {
        FlockError::InvariantBreach(_) | FlockError::NonFinite(_) => PyRuntimeError::new_err(e.to_string()),
        other => value_err(other),
    }
}

fn cli_err(e: CliError) -> PyErr {
    match e {
        CliError::Invariant(_) => PyRuntimeError::new_err(e.to_string()),
        other => value_err(other),
    }
}

/// Serialize through JSON into Python objects.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(value_err)
}

type Rows = Vec<[f64; 3]>;

fn vecs(rows: &[[f64; 3]]) -> Vec<Vec3> {
    rows.iter().map(|&r| Vec3(r)).collect()
}

fn rows(vs: &[Vec3]) -> Vec<[f64; 3]> {
    vs.iter().map(|v| v.0).collect()
}

/// A validated run configuration.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: SimConfig,
}

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        SimConfig::from_toml(text).map(|inner| PyConfig { inner }).map_err(value_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        SimConfig::load(path.as_ref()).map(|inner| PyConfig { inner }).map_err(value_err)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    /// Copy with one of `p`, `alpha`, `h`, `speed`, `box_side`, `seed` replaced.
    fn with_param(&self, name: &str, value: f64) -> PyResult<Self> {
        self.inner.with_param(name, value).map(|inner| PyConfig { inner }).map_err(value_err)
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn h(&self) -> f64 {
        self.inner.h
    }

    #[getter]
    fn horizon(&self) -> u64 {
        self.inner.horizon
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    fn __repr__(&self) -> String {
        format!("Config(k={}, h={}, horizon={}, seed={})", self.inner.k, self.inner.h, self.inner.horizon, self.inner.seed)
    }
}

/// An interaction kernel with its lower-bound certificate `(p, alpha)`.
#[pyclass(name = "InteractionModel")]
struct PyInteractionModel {
    inner: InteractionModel,
}

#[pymethods]
impl PyInteractionModel {
    /// `spec` is a dict such as `{"kind": "bernoulli_failure", "p": 0.5, "alpha": 0.5}`.
    #[new]
    fn new(spec: &Bound<'_, PyAny>) -> PyResult<Self> {
        let kind: InteractionKind = from_py(spec)?;
        InteractionModel::new(kind).map(|inner| PyInteractionModel { inner }).map_err(flock_err)
    }

    fn certificate(&self) -> (f64, f64) {
        let c = self.inner.certificate();
        (c.p, c.alpha)
    }

    fn is_random(&self) -> bool {
        self.inner.is_random()
    }

    /// Weight at distance `d` for the uniform variate `u`.
    fn weight(&self, d: f64, u: f64) -> f64 {
        self.inner.weight(d, u)
    }

    fn expected_weight(&self, d: f64) -> f64 {
        self.inner.expected_weight(d)
    }
}

/// A stored trajectory.
#[pyclass(name = "Trajectory")]
struct PyTrajectory {
    #[pyo3(get)]
    h: f64,
    #[pyo3(get)]
    frame: String,
    /// `positions[t][i]` as `[x, y, z]`.
    #[pyo3(get)]
    positions: Vec<Vec<[f64; 3]>>,
    #[pyo3(get)]
    velocities: Vec<Vec<[f64; 3]>>,
    #[pyo3(get)]
    sup_velocity: Vec<f64>,
    #[pyo3(get)]
    sup_position: Vec<f64>,
    /// `weights[t - 1][i]`: the weights bird `i + 1` gave its leaders at step `t`.
    #[pyo3(get)]
    weights: Vec<Vec<Vec<f64>>>,
}

#[pymethods]
impl PyTrajectory {
    fn __len__(&self) -> usize {
        self.positions.len()
    }
}

#[pyfunction]
#[pyo3(signature = (config, replica = 0, absolute = false, horizon = None))]
fn run(config: &PyConfig, replica: u64, absolute: bool, horizon: Option<u64>) -> PyResult<PyTrajectory> {
    let sc = config.inner.scenario().map_err(value_err)?;
    let frame = if absolute { Frame::Absolute } else { Frame::Relative };
    let traj = simulate(&sc, RngStream::new(config.inner.seed, replica), frame, horizon.unwrap_or(config.inner.horizon))
        .map_err(flock_err)?;
    let k = sc.k();
    Ok(PyTrajectory {
        h: traj.h,
        frame: if absolute { "absolute" } else { "relative" }.into(),
        positions: traj.states.iter().map(|s| rows(s.positions())).collect(),
        velocities: traj.states.iter().map(|s| rows(s.velocities())).collect(),
        sup_velocity: traj.states.iter().map(FlockState::sup_velocity).collect(),
        sup_position: traj.states.iter().map(FlockState::sup_position).collect(),
        weights: traj.weights.iter().map(|w| (0..k).map(|i| w.row(i).to_vec()).collect()).collect(),
    })
}

/// One step with explicit weights. `leaders[i]` lists the 1-based leaders of
/// bird `i + 1` and `weights[i]` is aligned with it.
#[pyfunction]
#[pyo3(signature = (positions, velocities, leaders, weights, h, t = 0, relative = false))]
fn step(
    positions: Vec<[f64; 3]>,
    velocities: Vec<[f64; 3]>,
    leaders: Vec<Vec<usize>>,
    weights: Vec<Vec<f64>>,
    h: f64,
    t: u64,
    relative: bool,
) -> PyResult<(Rows, Rows)> {
    let hier = Hierarchy::from_leader_sets(leaders).map_err(value_err)?;
    let frame = if relative { Frame::Relative } else { Frame::Absolute };
    let state = FlockState::new(t, vecs(&positions), vecs(&velocities), frame).map_err(flock_err)?;
    let w = WeightMatrix::new(&hier, t + 1, weights).map_err(flock_err)?;
    let next = hlflock::step(&state, &hier, &w, h).map_err(flock_err)?;
    Ok((rows(next.positions()), rows(next.velocities())))
}

/// Raise `ValueError` naming the offending bird, or return `None`.
#[pyfunction]
fn validate_hierarchy(leaders: Vec<Vec<usize>>) -> PyResult<()> {
    hlflock::validate_hierarchy(&leaders).map_err(value_err)
}

#[pyfunction]
fn verify<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &cmd_verify(&config.inner).map_err(cli_err)?)
}

fn bound_params_for(config: &PyConfig, replica: u64) -> PyResult<(BoundParams, usize)> {
    let sc = config.inner.scenario().map_err(value_err)?;
    let initial = sc.initial_state(&RngStream::new(config.inner.seed, replica), Frame::Relative).map_err(flock_err)?;
    let bp = derive_bound_params(&initial, &sc.hierarchy, sc.h, sc.model.certificate()).map_err(flock_err)?;
    Ok((bp, sc.k()))
}

#[pyfunction]
#[pyo3(signature = (config, replica = 0))]
fn bound_params<'py>(py: Python<'py>, config: &PyConfig, replica: u64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &bound_params_for(config, replica)?.0)
}

/// Bound on the expected contraction product of `bird` over `(tau, t + 1]`
/// for the initial state of `replica`.
#[pyfunction]
#[pyo3(signature = (config, bird, tau, t, replica = 0))]
fn contraction_bound(config: &PyConfig, bird: usize, tau: u64, t: u64, replica: u64) -> PyResult<f64> {
    let (bp, k) = bound_params_for(config, replica)?;
    if bird < 2 || bird > k {
        return Err(PyValueError::new_err(format!("bird {bird} outside 2..={k}")));
    }
    if bp.alpha < 1.0 {
        lemma2_bound_subcritical(&bp, tau, t).map_err(value_err)
    } else {
        lemma2_bound_critical(&bp, bird, tau, t).map(|b| b.value).map_err(value_err)
    }
}

#[pyfunction]
#[pyo3(signature = (config, replicas = None, horizon = None, parallel = true))]
fn ensemble<'py>(
    py: Python<'py>,
    config: &PyConfig,
    replicas: Option<usize>,
    horizon: Option<u64>,
    parallel: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let mut spec = config.inner.ensemble_spec(replicas, horizon).map_err(value_err)?;
    spec.parallel = parallel;
    let report = py.detach(|| run_ensemble(&spec)).map_err(|e| cli_err(e.into()))?;
    to_py(py, &report)
}

/// `v_2[t] = ∏ (1 - h a_21[τ]) v_2[0]` for `t = 0..=len(a21)`.
#[pyfunction]
fn two_bird_oracle(a21: Vec<f64>, h: f64, v2: [f64; 3]) -> Vec<[f64; 3]> {
    rows(&two_bird_product_oracle(&a21, h, Vec3(v2)))
}

#[pymodule]
fn hlflock_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyInteractionModel>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(step, m)?)?;
    m.add_function(wrap_pyfunction!(validate_hierarchy, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(bound_params, m)?)?;
    m.add_function(wrap_pyfunction!(contraction_bound, m)?)?;
    m.add_function(wrap_pyfunction!(ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(two_bird_oracle, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
