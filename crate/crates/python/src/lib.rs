//! Python bindings. Structured results cross the boundary as plain dicts.

use inout::diagnostics::{self, BoxGridPartition};
use inout::planner::{self, Plan, PlanInputs};
use inout::sampler::{self, ChainParams, FixedStart, UniformStart, WarmStart};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

fn err(e: inout::Error) -> PyErr {
    match e {
        inout::Error::InvalidArgument(_) | inout::Error::InvalidCertificate(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py<T: serde::de::DeserializeOwned>(py: Python<'_>, value: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = py.import("json")?.call_method1("dumps", (value,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyclass(name = "Body", frozen, from_py_object)]
#[derive(Clone)]
struct PyBody(inout::Body);

#[pymethods]
impl PyBody {
    #[staticmethod]
    fn ball(center: Vec<f64>, radius: f64) -> PyResult<Self> {
        inout::Body::ball(center, radius).map(Self).map_err(err)
    }

    #[staticmethod]
    fn cuboid(lo: Vec<f64>, hi: Vec<f64>) -> PyResult<Self> {
        inout::Body::cuboid(lo, hi).map(Self).map_err(err)
    }

    #[staticmethod]
    fn polytope(a: Vec<Vec<f64>>, b: Vec<f64>, inner_center: Vec<f64>, inner_radius: f64) -> PyResult<Self> {
        inout::Body::halfspace_polytope(a, b, inner_center, inner_radius).map(Self).map_err(err)
    }

    #[staticmethod]
    fn union(parts: Vec<PyBody>, volume: f64) -> PyResult<Self> {
        inout::Body::union(parts.into_iter().map(|p| p.0).collect(), volume).map(Self).map_err(err)
    }

    #[staticmethod]
    fn exclusion(outer: &PyBody, hole: &PyBody, volume: f64) -> PyResult<Self> {
        inout::Body::exclusion(outer.0.clone(), hole.0.clone(), volume).map(Self).map_err(err)
    }

    #[staticmethod]
    fn star(parts: Vec<PyBody>, core_radius: f64) -> PyResult<Self> {
        inout::Body::star_shaped(parts.into_iter().map(|p| p.0).collect(), core_radius).map(Self).map_err(err)
    }

    fn with_volume(&self, volume: f64) -> PyResult<Self> {
        self.0.with_exact_volume(volume).map(Self).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn volume(&self) -> Option<f64> {
        self.0.exact_volume()
    }

    /// `(alpha, beta)` if the body carries a growth certificate.
    #[getter]
    fn certificate(&self) -> Option<(f64, f64)> {
        self.0.growth().map(|g| (g.alpha, g.beta))
    }

    fn contains(&self, x: Vec<f64>) -> bool {
        self.0.contains(&x)
    }

    fn __contains__(&self, x: Vec<f64>) -> bool {
        self.0.contains(&x)
    }

    fn __repr__(&self) -> String {
        format!("Body(dim={}, volume={:?})", self.0.dim(), self.0.exact_volume())
    }
}

/// Schedule for the given inputs; `(alpha, beta)` is the growth certificate.
#[pyfunction]
#[pyo3(signature = (q, eps, M, C_PI, n, alpha = 1.0, beta = 1.0))]
#[allow(non_snake_case)]
fn plan(py: Python<'_>, q: f64, eps: f64, M: f64, C_PI: f64, n: u32, alpha: f64, beta: f64) -> PyResult<Py<PyAny>> {
    let inputs = PlanInputs::new(q, eps, M, C_PI, alpha, beta, n).map_err(err)?;
    to_py(py, &planner::plan(&inputs).map_err(err)?)
}

#[pyfunction]
fn chi_tail(m: u32, r: f64) -> PyResult<f64> {
    inout::chi_tail(m, r).map_err(err)
}

fn params(steps: u64, h: f64, threshold: u64) -> PyResult<ChainParams> {
    ChainParams::new(steps, h, threshold).map_err(err)
}

#[pyfunction]
fn run_chain(py: Python<'_>, body: &PyBody, x0: Vec<f64>, steps: u64, h: f64, threshold: u64, seed: u64) -> PyResult<Py<PyAny>> {
    let p = params(steps, h, threshold)?;
    let run = py.detach(|| sampler::run_in_and_out(&body.0, &x0, &p, seed)).map_err(err)?;
    to_py(py, &run)
}

/// Independent chains from uniform starts, or from `x0` if given.
#[pyfunction]
#[pyo3(signature = (body, n_chains, steps, h, threshold, seed, x0 = None))]
fn run_ensemble(
    py: Python<'_>,
    body: &PyBody,
    n_chains: u64,
    steps: u64,
    h: f64,
    threshold: u64,
    seed: u64,
    x0: Option<Vec<f64>>,
) -> PyResult<Py<PyAny>> {
    let p = params(steps, h, threshold)?;
    let uniform = UniformStart { body: &body.0 };
    let fixed = x0.map(FixedStart);
    let start: &dyn WarmStart = match &fixed {
        Some(f) => f,
        None => &uniform,
    };
    let result = py.detach(|| sampler::run_ensemble(&body.0, start, &p, n_chains, seed)).map_err(err)?;
    let out = PyDict::new(py);
    let samples: Vec<Option<&[f64]>> = result.runs.iter().map(|r| r.final_point()).collect();
    out.set_item("samples", to_py(py, &samples)?)?;
    out.set_item("summary", to_py(py, &result.summary)?)?;
    Ok(out.into_any().unbind())
}

#[pyfunction]
fn escape_check(py: Python<'_>, body: &PyBody, h: f64, r: f64, n_mc: u64, seed: u64) -> PyResult<Py<PyAny>> {
    let check = py.detach(|| diagnostics::stationary_escape_check(&body.0, h, r, n_mc, seed)).map_err(err)?;
    to_py(py, &check)
}

#[pyfunction]
fn failure_check(py: Python<'_>, body: &PyBody, plan: &Bound<'_, PyAny>, n_mc: u64, inner_mc: u64, seed: u64) -> PyResult<Py<PyAny>> {
    let plan: Plan = from_py(py, plan)?;
    let check = py.detach(|| diagnostics::stationary_failure_check(&body.0, &plan, n_mc, inner_mc, seed)).map_err(err)?;
    to_py(py, &check)
}

#[pyfunction]
fn trials_check(py: Python<'_>, body: &PyBody, plan: &Bound<'_, PyAny>, n_mc: u64, inner_mc: u64, seed: u64) -> PyResult<Py<PyAny>> {
    let plan: Plan = from_py(py, plan)?;
    let check = py.detach(|| diagnostics::expected_trials_check(&body.0, &plan, n_mc, inner_mc, seed)).map_err(err)?;
    to_py(py, &check)
}

/// Chi-square uniformity test of `samples` over a `k`-per-axis grid on the box `[lo, hi]`.
#[pyfunction]
fn box_uniformity(py: Python<'_>, lo: Vec<f64>, hi: Vec<f64>, k: usize, samples: Vec<Vec<f64>>) -> PyResult<Py<PyAny>> {
    let partition = BoxGridPartition::new(lo, hi, k).map_err(err)?;
    to_py(py, &diagnostics::partition_uniformity_check(&partition, &samples).map_err(err)?)
}

#[pymodule]
fn inout_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBody>()?;
    m.add_function(wrap_pyfunction!(plan, m)?)?;
    m.add_function(wrap_pyfunction!(chi_tail, m)?)?;
    m.add_function(wrap_pyfunction!(run_chain, m)?)?;
    m.add_function(wrap_pyfunction!(run_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(escape_check, m)?)?;
    m.add_function(wrap_pyfunction!(failure_check, m)?)?;
    m.add_function(wrap_pyfunction!(trials_check, m)?)?;
    m.add_function(wrap_pyfunction!(box_uniformity, m)?)?;
    Ok(())
}
