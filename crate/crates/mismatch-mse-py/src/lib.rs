//! Python bindings. Records are returned as plain dicts mirroring the JSON
//! emitted by the command-line tool.

use mismatch_mse::cli::config::{instance_from_str, sweep_from_str};
use mismatch_mse::cli::output::sweep_csv;
use mismatch_mse::cli::presets::{preset, PRESET_NAMES};
use mismatch_mse::cli::sweep::run_sweep;
use mismatch_mse::mse::{Branch, MseEvaluator};
use mismatch_mse::rates::DEFAULT_TIE_TOL;
use mismatch_mse::simulator::{run_simulation, SimConfig};
use mismatch_mse::*;
use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

create_exception!(mismatch_mse, NumericalError, PyRuntimeError, "A solver or quadrature step failed.");

fn core_err(e: Error) -> PyErr {
    if e.is_numerical() {
        NumericalError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn to_py(py: Python<'_>, v: &Value) -> PyResult<Py<PyAny>> {
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any().unbind(),
            (None, Some(f)) => f.into_pyobject(py)?.into_any().unbind(),
            _ => py.None(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        Value::Array(a) => {
            let items = a.iter().map(|x| to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any().unbind()
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any().unbind()
        }
    })
}

fn record<T: serde::Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    to_py(py, &serde_json::to_value(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?)
}

/// Accepts a JSON string or any JSON-serializable Python object.
fn json_text(obj: &Bound<'_, PyAny>) -> PyResult<String> {
    if let Ok(s) = obj.extract::<String>() {
        return Ok(s);
    }
    obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()
}

fn root_config(tol: Option<f64>, max_iters: Option<usize>) -> RootConfig {
    let mut cfg = RootConfig::default();
    if let Some(t) = tol {
        cfg.abs_tol = t;
    }
    if let Some(m) = max_iters {
        cfg.max_iters = m;
    }
    cfg
}

/// A sampled estimator filter `Ξ(ω)`.
#[pyclass(name = "Filter", module = "mismatch_mse", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyFilter {
    inner: LinearFilter,
}

#[pymethods]
impl PyFilter {
    #[new]
    fn new(samples: Vec<Complex64>) -> PyResult<Self> {
        LinearFilter::new(samples, FilterKind::Custom).map(|inner| PyFilter { inner }).map_err(core_err)
    }

    #[getter]
    fn kind(&self) -> String {
        serde_json::to_value(self.inner.kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
    }

    #[getter]
    fn samples(&self) -> Vec<Complex64> {
        self.inner.xi.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.grid_size()
    }

    fn __repr__(&self) -> String {
        format!("Filter(kind={:?}, grid_size={})", self.kind(), self.inner.grid_size())
    }
}

/// A channel pair `(H, H′)` with SNR parameter `β` and input power `P_x`.
#[pyclass(name = "Instance", module = "mismatch_mse", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyInstance {
    inner: ProblemInstance,
    cfg: RootConfig,
}

impl PyInstance {
    fn evaluator(&self) -> PyResult<MseEvaluator<'_>> {
        MseEvaluator::new(&self.inner, &self.cfg, DEFAULT_TIE_TOL).map_err(core_err)
    }
}

#[pymethods]
impl PyInstance {
    /// Builds an instance from two filter specifications (dicts or JSON).
    #[new]
    #[pyo3(signature = (h_true, h_assumed, beta = 1.0, p_x = 1.0, grid_size = 4096, tol = None, max_iters = None))]
    fn new(
        h_true: &Bound<'_, PyAny>,
        h_assumed: &Bound<'_, PyAny>,
        beta: f64,
        p_x: f64,
        grid_size: usize,
        tol: Option<f64>,
        max_iters: Option<usize>,
    ) -> PyResult<Self> {
        let text = format!(
            r#"{{"h_true": {}, "h_assumed": {}, "beta": {beta}, "p_x": {p_x}, "grid_size": {grid_size}}}"#,
            json_text(h_true)?,
            json_text(h_assumed)?
        );
        Self::from_json(&text, tol, max_iters)
    }

    /// Parses an instance configuration file's contents.
    #[staticmethod]
    #[pyo3(signature = (text, tol = None, max_iters = None))]
    fn from_json(text: &str, tol: Option<f64>, max_iters: Option<usize>) -> PyResult<Self> {
        let (_, inner) = instance_from_str(text, None).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyInstance { inner, cfg: root_config(tol, max_iters) })
    }

    /// The column of a preset sweep at parameter value `param`.
    #[staticmethod]
    #[pyo3(signature = (name, param, chi = None, grid_size = None))]
    fn preset(name: &str, param: f64, chi: Option<f64>, grid_size: Option<usize>) -> PyResult<Self> {
        let spec = preset(name, chi, grid_size).map_err(core_err)?;
        let inner = spec.instance_at(param).map_err(core_err)?;
        Ok(PyInstance { inner, cfg: RootConfig::default() })
    }

    #[getter]
    fn grid_size(&self) -> usize {
        self.inner.grid_size()
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }

    #[getter]
    fn p_x(&self) -> f64 {
        self.inner.p_x
    }

    #[getter]
    fn h_true(&self) -> Vec<Complex64> {
        self.inner.h_true.samples().to_vec()
    }

    #[getter]
    fn h_assumed(&self) -> Vec<Complex64> {
        self.inner.h_assumed.samples().to_vec()
    }

    fn critical_rates(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        record(py, &compute_critical_rates(&self.inner, &self.cfg).map_err(core_err)?)
    }

    /// `(phase, boundary)` of rate `rate`.
    #[pyo3(signature = (rate, tie_tol = DEFAULT_TIE_TOL))]
    fn classify(&self, rate: f64, tie_tol: f64) -> PyResult<(String, bool)> {
        let rates = compute_critical_rates(&self.inner, &self.cfg).map_err(core_err)?;
        let label = classify_phase(rate, &rates, tie_tol);
        Ok((format!("{:?}", label.phase), label.boundary))
    }

    /// Phase, MSE per symbol and producing filter at rate `rate`.
    fn mse(&self, py: Python<'_>, rate: f64) -> PyResult<Py<PyAny>> {
        let report = self.evaluator()?.evaluate(rate, None).map_err(core_err)?;
        let d = PyDict::new(py);
        d.set_item("rate", rate)?;
        d.set_item("phase", format!("{:?}", report.phase.phase))?;
        d.set_item("boundary", report.phase.boundary)?;
        d.set_item("mse_per_symbol", report.mse_per_symbol)?;
        d.set_item("filter", report.filter.map(|inner| PyFilter { inner }))?;
        d.set_item("rates", record(py, &report.rates)?)?;
        d.set_item("glassy", report.glassy.as_ref().map(|g| record(py, g)).transpose()?)?;
        Ok(d.into_any().unbind())
    }

    fn gamma_of_eps(&self, eps: f64) -> PyResult<f64> {
        gamma_of_eps(&self.inner, eps, &self.cfg).map_err(core_err)
    }

    /// Free energy of `branch` ∈ {"ferro", "glassy", "para"} at rate `rate`.
    fn free_energy(&self, rate: f64, branch: &str) -> PyResult<f64> {
        let b = match branch {
            "ferro" => Branch::Ferro,
            "glassy" => Branch::Glassy,
            "para" => Branch::Para,
            other => return Err(PyValueError::new_err(format!("unknown branch `{other}`"))),
        };
        free_energy(&self.inner, rate, b, &self.cfg).map_err(core_err)
    }

    fn wiener_filter(&self) -> PyFilter {
        PyFilter { inner: wiener_filter(&self.inner) }
    }

    /// The paramagnetic filter `Ξ₁`.
    fn para_filter(&self) -> PyResult<PyFilter> {
        Ok(PyFilter { inner: self.evaluator()?.para().map_err(core_err)?.0 })
    }

    /// The glassy filter `Ξ₂` at rate `rate`.
    fn glassy_filter(&self, rate: f64) -> PyResult<PyFilter> {
        let ev = self.evaluator()?;
        let g = ev.glassy(rate, None).map_err(core_err)?;
        Ok(PyFilter { inner: ev.glassy_filter(&g).map_err(core_err)?.0 })
    }

    fn filter_mse(&self, filter: &PyFilter) -> PyResult<f64> {
        filter_mse(&filter.inner, &self.inner).map_err(core_err)
    }

    fn matched_mmse(&self, rate: f64) -> PyResult<f64> {
        matched_mmse(&self.inner, rate, None).map_err(core_err)
    }

    fn __repr__(&self) -> String {
        format!("Instance(grid_size={}, beta={}, p_x={})", self.inner.grid_size(), self.inner.beta, self.inner.p_x)
    }
}

#[pyfunction]
fn preset_names() -> Vec<&'static str> {
    PRESET_NAMES.to_vec()
}

/// Runs a preset sweep, or a sweep configuration given as `config`, and
/// returns the CSV text.
#[pyfunction]
#[pyo3(signature = (name = None, chi = None, grid_size = None, free_energies = false, parallelism = 1, config = None))]
fn sweep(
    name: Option<&str>,
    chi: Option<f64>,
    grid_size: Option<usize>,
    free_energies: bool,
    parallelism: usize,
    config: Option<&Bound<'_, PyAny>>,
) -> PyResult<String> {
    let mut spec = match (name, config) {
        (Some(n), None) => preset(n, chi, grid_size).map_err(core_err)?,
        (None, Some(c)) => sweep_from_str(&json_text(c)?, grid_size).map_err(|e| PyValueError::new_err(e.to_string()))?,
        _ => return Err(PyValueError::new_err("pass exactly one of `name` and `config`")),
    };
    spec.outputs.free_energies |= free_energies;
    let grid = run_sweep(&spec, parallelism.max(1), &RootConfig::default()).map_err(core_err)?;
    Ok(sweep_csv(&grid))
}

/// Monte-Carlo MSE with exact posterior means over a random spherical code.
#[pyfunction]
#[pyo3(signature = (instance, n, rate, trials, seed = 0, codebooks = 1))]
fn simulate(
    py: Python<'_>,
    instance: &PyInstance,
    n: usize,
    rate: f64,
    trials: usize,
    seed: u64,
    codebooks: usize,
) -> PyResult<Py<PyAny>> {
    let mut cfg = SimConfig::new(instance.inner.clone(), n, rate, trials, seed);
    cfg.codebooks = codebooks;
    let result = py.detach(|| run_simulation(&cfg)).map_err(core_err)?;
    record(py, &result)
}

#[pymodule]
#[pyo3(name = "mismatch_mse")]
fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyInstance>()?;
    m.add_class::<PyFilter>()?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    Ok(())
}
