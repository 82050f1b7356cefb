//! Python bindings: scenarios, runs, oracle tests and the regularizers.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use chemons::config::resolve_config;
use chemons::diagnostics::{FunctionalRecord, CSV_COLUMNS};
use chemons::harness::{self, evaluate_monitors, MonitorTolerances};
use chemons::regularization;
use chemons::{Error, FluidVariant, GridSpec};

fn to_py(e: Error) -> PyErr {
    if e.is_numerical() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

#[pyclass(name = "Grid", from_py_object)]
#[derive(Clone)]
pub struct PyGrid(GridSpec);

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (cells, lengths=None))]
    fn new(cells: Vec<usize>, lengths: Option<Vec<f64>>) -> PyResult<Self> {
        let lengths = lengths.unwrap_or_else(|| vec![1.0; cells.len()]);
        GridSpec::new(&cells, &lengths).map(PyGrid).map_err(to_py)
    }

    #[getter]
    fn cells(&self) -> Vec<usize> {
        self.0.cells().to_vec()
    }

    #[getter]
    fn lengths(&self) -> Vec<f64> {
        self.0.lengths().to_vec()
    }

    fn spacing(&self, axis: usize) -> PyResult<f64> {
        if axis >= self.0.dim() {
            return Err(PyValueError::new_err(format!("axis {axis} out of range")));
        }
        Ok(self.0.spacing(axis))
    }

    fn __repr__(&self) -> String {
        format!("Grid(cells={:?}, lengths={:?})", self.0.cells(), self.0.lengths())
    }
}

#[pyclass(name = "Scenario")]
pub struct PyScenario(harness::Scenario);

#[pymethods]
impl PyScenario {
    /// The default scenario: 64² unit square, bump density, uniform oxygen.
    #[new]
    fn new() -> Self {
        PyScenario(harness::Scenario::default())
    }

    /// Builds a scenario from TOML text plus `--section.key=value` overrides.
    #[staticmethod]
    #[pyo3(signature = (text, overrides=Vec::new()))]
    fn from_toml(text: &str, overrides: Vec<String>) -> PyResult<Self> {
        let mut text = text.to_string();
        if !text.contains("[output]") {
            text.push_str("\n[output]\ndir = \".\"\n");
        }
        let cfg = resolve_config(&text, None, &overrides).map_err(to_py)?;
        Ok(PyScenario(cfg.scenario))
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(self.0.grid.clone())
    }

    #[setter]
    fn set_grid(&mut self, g: PyGrid) {
        self.0.grid = g.0;
    }

    #[getter]
    fn t_final(&self) -> f64 {
        self.0.t_final
    }

    #[setter]
    fn set_t_final(&mut self, t: f64) {
        self.0.t_final = t;
    }

    #[getter]
    fn sample_dt(&self) -> f64 {
        self.0.sample_dt
    }

    #[setter]
    fn set_sample_dt(&mut self, dt: f64) {
        self.0.sample_dt = dt;
    }

    #[getter]
    fn eps(&self) -> f64 {
        self.0.params.eps
    }

    #[setter]
    fn set_eps(&mut self, v: f64) {
        self.0.params.eps = v;
    }

    #[getter]
    fn m(&self) -> f64 {
        self.0.params.m
    }

    #[setter]
    fn set_m(&mut self, v: f64) {
        self.0.params.m = v;
    }

    #[getter]
    fn chi(&self) -> f64 {
        self.0.params.chi
    }

    #[setter]
    fn set_chi(&mut self, v: f64) {
        self.0.params.chi = v;
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.0.params.kappa
    }

    #[setter]
    fn set_kappa(&mut self, v: f64) {
        self.0.params.kappa = v;
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.0.params.mu
    }

    #[setter]
    fn set_mu(&mut self, v: f64) {
        self.0.params.mu = v;
    }

    /// One of "navier_stokes", "stokes", "frozen".
    #[getter]
    fn fluid(&self) -> &'static str {
        match self.0.params.fluid {
            FluidVariant::NavierStokes => "navier_stokes",
            FluidVariant::Stokes => "stokes",
            FluidVariant::Frozen => "frozen",
        }
    }

    #[setter]
    fn set_fluid(&mut self, v: &str) -> PyResult<()> {
        self.0.params.fluid = match v {
            "navier_stokes" => FluidVariant::NavierStokes,
            "stokes" => FluidVariant::Stokes,
            "frozen" => FluidVariant::Frozen,
            other => return Err(PyValueError::new_err(format!("unknown fluid variant `{other}`"))),
        };
        Ok(())
    }

    fn validate(&self) -> PyResult<()> {
        self.0.validate().map_err(to_py)
    }

    /// Runs to `t_final`; releases the GIL while stepping.
    fn run(&self, py: Python<'_>) -> PyResult<PyRunOutput> {
        let scenario = self.0.clone();
        let out = py
            .detach(|| harness::run(&scenario))
            .map_err(|e| to_py(e.error))?;
        let c0 = scenario.initial_state().map_err(to_py)?.c;
        let verdicts = evaluate_monitors(&out.history, &c0, &scenario.params, &MonitorTolerances::default());
        Ok(PyRunOutput {
            history: out.history,
            steps: out.steps,
            final_n: out.final_state.as_ref().map(|s| s.n.values.clone()).unwrap_or_default(),
            final_c: out.final_state.as_ref().map(|s| s.c.values.clone()).unwrap_or_default(),
            monitors: verdicts
                .into_iter()
                .map(|v| (v.name, v.passed, v.observed, v.bound))
                .collect(),
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(cells={:?}, m={}, eps={}, chi={}, t_final={})",
            self.0.grid.cells(),
            self.0.params.m,
            self.0.params.eps,
            self.0.params.chi,
            self.0.t_final
        )
    }
}

#[pyclass(name = "RunOutput")]
pub struct PyRunOutput {
    history: Vec<FunctionalRecord>,
    #[pyo3(get)]
    steps: usize,
    #[pyo3(get)]
    final_n: Vec<f64>,
    #[pyo3(get)]
    final_c: Vec<f64>,
    /// `(name, passed, observed, bound)` per monitor.
    #[pyo3(get)]
    monitors: Vec<(String, bool, f64, f64)>,
}

#[pymethods]
impl PyRunOutput {
    /// Functional history keyed by CSV column name.
    fn history(&self) -> BTreeMap<String, Vec<f64>> {
        let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for r in &self.history {
            for (name, v) in CSV_COLUMNS.iter().zip(r.values()) {
                out.entry(name.to_string()).or_default().push(v);
            }
        }
        out
    }

    fn passed(&self) -> bool {
        self.monitors.iter().all(|m| m.1)
    }
}

#[pyfunction]
fn consumption_f(s: f64, eps: f64) -> PyResult<f64> {
    regularization::consumption_f(s, eps).map_err(to_py)
}

#[pyfunction]
fn sensitivity(s: f64, eps: f64) -> PyResult<f64> {
    regularization::sensitivity(s, eps).map_err(to_py)
}

/// Returns `(l1_error, mass, relative, steps)`.
#[pyfunction]
#[pyo3(signature = (m=2.0, cells=128, t0=1.0, t1=1.5))]
fn barenblatt_test(py: Python<'_>, m: f64, cells: usize, t0: f64, t1: f64) -> PyResult<(f64, f64, f64, usize)> {
    let g = GridSpec::unit_square(cells).map_err(to_py)?;
    let r = py.detach(|| harness::barenblatt_test(m, &g, t0, t1)).map_err(to_py)?;
    Ok((r.l1_error, r.mass, r.relative, r.steps))
}

/// Returns `(linf_error, dt, steps)`.
#[pyfunction]
#[pyo3(signature = (cells=64, t1=0.1, amplitude=0.5, dt=5e-4))]
fn heat_mode_test(py: Python<'_>, cells: usize, t1: f64, amplitude: f64, dt: f64) -> PyResult<(f64, f64, usize)> {
    let g = GridSpec::unit_square(cells).map_err(to_py)?;
    let r = py.detach(|| harness::heat_mode_test(&g, t1, amplitude, dt)).map_err(to_py)?;
    Ok((r.linf_error, r.dt, r.steps))
}

#[pymodule]
fn chemons_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyRunOutput>()?;
    m.add_function(wrap_pyfunction!(consumption_f, m)?)?;
    m.add_function(wrap_pyfunction!(sensitivity, m)?)?;
    m.add_function(wrap_pyfunction!(barenblatt_test, m)?)?;
    m.add_function(wrap_pyfunction!(heat_mode_test, m)?)?;
    m.add("CSV_COLUMNS", CSV_COLUMNS.to_vec())?;
    Ok(())
}
