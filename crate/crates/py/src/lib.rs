//! Python bindings. Structured results come back as plain dicts and lists.

use std::path::PathBuf;

use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use phdyn_core::cocycles::{self, PeriodicCocycle};
use phdyn_core::conley::{self, BoxGrid, Enclosure, DEFAULT_EDGE_BUDGET};
use phdyn_core::horseshoe_analysis::{self, SymbolicWord};
use phdyn_core::linear_models::{spectral_classify, IntegerMatrix};
use phdyn_core::maps::{make_map, BuiltMap, DynamicalMap, Image, MapSpec};
use phdyn_core::{rotation, shadowing};

fn err(e: phdyn_core::Error) -> PyErr {
    match e {
        phdyn_core::Error::InvalidInput(_) | phdyn_core::Error::NotUnimodular(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Serialized through the same rounding as the CLI artifacts, then parsed by
/// Python's `json` module.
fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = phdyn_core::output::to_json_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("expected a non-empty square matrix"));
    }
    Ok(DMatrix::from_fn(n, n, |r, c| rows[r][c]))
}

/// A map built from a JSON map specification.
#[pyclass(name = "Map", module = "phdyn", frozen)]
struct PyMap {
    built: BuiltMap,
}

#[pymethods]
impl PyMap {
    #[new]
    fn new(spec_json: &str) -> PyResult<Self> {
        let spec = MapSpec::from_json(spec_json).map_err(err)?;
        Ok(Self { built: make_map(&spec).map_err(err)? })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.built.kind()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.built.as_dynamical().dim()
    }

    /// Image of `x`, or `None` if it escapes.
    fn image(&self, x: Vec<f64>) -> PyResult<Option<Vec<f64>>> {
        let m = self.built.as_dynamical();
        if x.len() != m.dim() {
            return Err(PyValueError::new_err(format!("expected {} coordinates", m.dim())));
        }
        Ok(match m.image(&x) {
            Image::Point(y) => Some(y),
            Image::Escape => None,
        })
    }

    /// Jacobian rows at `x`, or `None` if the map is undefined there.
    fn jacobian(&self, x: Vec<f64>) -> PyResult<Option<Vec<Vec<f64>>>> {
        let m = self.built.as_dynamical();
        if x.len() != m.dim() {
            return Err(PyValueError::new_err(format!("expected {} coordinates", m.dim())));
        }
        Ok(m.jacobian(&x).map(|j| j.row_iter().map(|r| r.iter().copied().collect()).collect()))
    }

    /// Chain classes of the box transition graph at `resolution` boxes per axis.
    #[pyo3(signature = (resolution, epsilon=None))]
    fn conley<'py>(&self, py: Python<'py>, resolution: usize, epsilon: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
        let m = self.built.as_dynamical();
        let grid = BoxGrid::for_domain(m.domain(), resolution).map_err(err)?;
        let enclosure = match m.component_bound() {
            Some(b) => Enclosure::Componentwise(b),
            None => Enclosure::Lipschitz(m.lipschitz_hint()),
        };
        let eps = epsilon.unwrap_or(1.0 / resolution as f64);
        let graph = py
            .detach(|| conley::build_graph(m, &grid, eps, enclosure, DEFAULT_EDGE_BUDGET))
            .map_err(err)?;
        let decomp = conley::chain_classes(&graph);
        to_py(py, &conley::graph_stats(&graph, &decomp))
    }

    /// Mean displacement of the lift along orbits of length `n`.
    #[pyo3(signature = (starts, n, lift_shift=None))]
    fn rotation_vector<'py>(
        &self,
        py: Python<'py>,
        starts: Vec<Vec<f64>>,
        n: usize,
        lift_shift: Option<Vec<i64>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let t = self.built.torus().ok_or_else(|| PyValueError::new_err("needs a torus map"))?;
        let shift = lift_shift.unwrap_or_else(|| vec![0; t.dim()]);
        let est = py.detach(|| rotation::rotation_vector(t, &starts, n, &shift)).map_err(err)?;
        to_py(py, &est)
    }

    /// Builds the semiconjugacy to the linear part and checks equivariance.
    #[pyo3(signature = (tol=1e-8, samples=1000, seed=0))]
    fn semiconjugacy<'py>(&self, py: Python<'py>, tol: f64, samples: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let t = self.built.torus().ok_or_else(|| PyValueError::new_err("needs a torus map"))?;
        let report = py
            .detach(|| {
                let semi = shadowing::build_semiconjugacy(t, tol)?;
                shadowing::verify_equivariance(&semi, samples, seed)
            })
            .map_err(err)?;
        to_py(py, &report)
    }
}

/// Characteristic polynomial, eigenvalues and class of an integer matrix.
#[pyfunction]
fn classify<'py>(py: Python<'py>, matrix: Vec<Vec<i64>>) -> PyResult<Bound<'py, PyAny>> {
    let m = IntegerMatrix::new(matrix).map_err(err)?;
    to_py(py, &spectral_classify(&m).map_err(err)?)
}

/// Lyapunov exponents (ascending) of a periodic cocycle.
#[pyfunction]
fn cocycle_exponents<'py>(py: Python<'py>, matrices: Vec<Vec<Vec<f64>>>) -> PyResult<Bound<'py, PyAny>> {
    let mats = matrices.iter().map(|m| matrix(m)).collect::<PyResult<Vec<_>>>()?;
    let c = PeriodicCocycle::new(mats).map_err(err)?;
    to_py(py, &cocycles::exponents(&c))
}

/// Rotation path equalizing the exponents of a 2×2 cocycle.
#[pyfunction]
#[pyo3(signature = (matrices, step_cap=0.05))]
fn equalize_2d<'py>(py: Python<'py>, matrices: Vec<Vec<Vec<f64>>>, step_cap: f64) -> PyResult<Bound<'py, PyAny>> {
    let mats = matrices.iter().map(|m| matrix(m)).collect::<PyResult<Vec<_>>>()?;
    let c = PeriodicCocycle::new(mats).map_err(err)?;
    to_py(py, &cocycles::equalize_2d(&c, step_cap).map_err(err)?)
}

/// Small rotations steering the line of `w` onto the line of `v`.
#[pyfunction]
fn steer_vector<'py>(
    py: Python<'py>,
    matrices: Vec<Vec<Vec<f64>>>,
    v: Vec<f64>,
    w: Vec<f64>,
    eps: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let mats = matrices.iter().map(|m| matrix(m)).collect::<PyResult<Vec<_>>>()?;
    to_py(py, &cocycles::steer_vector(&mats, &v, &w, eps).map_err(err)?)
}

/// Integer relation search over a frequency vector.
#[pyfunction]
#[pyo3(signature = (v, bound=50, tol=1e-9))]
fn nonresonance_check<'py>(py: Python<'py>, v: Vec<f64>, bound: i64, tol: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &rotation::nonresonance_check(&v, bound, tol).map_err(err)?)
}

/// Periodic points of the default horseshoe skew product for a symbolic word.
#[pyfunction]
fn periodic_point<'py>(py: Python<'py>, word: &str) -> PyResult<Bound<'py, PyAny>> {
    let w = SymbolicWord::parse(word).map_err(err)?;
    let map = phdyn_core::maps::HorseshoeMap::new(Default::default()).map_err(err)?;
    to_py(py, &horseshoe_analysis::periodic_point(&map, &w).map_err(err)?)
}

/// Connection events over a fibre-amplitude range for words up to `max_length`.
#[pyfunction]
#[pyo3(signature = (lo, hi, max_length=12, tol=1e-10))]
fn heteroclinic_scan<'py>(py: Python<'py>, lo: f64, hi: f64, max_length: usize, tol: f64) -> PyResult<Bound<'py, PyAny>> {
    let spec = Default::default();
    let scan = py
        .detach(|| horseshoe_analysis::heteroclinic_scan(&spec, [lo, hi], max_length, tol))
        .map_err(err)?;
    to_py(py, &scan)
}

/// Runs a CLI config and returns the exit code.
#[pyfunction]
#[pyo3(signature = (config, out=None, overrides=None))]
fn run_config(py: Python<'_>, config: PathBuf, out: Option<PathBuf>, overrides: Option<Vec<String>>) -> i32 {
    let args = phdyn_core::cli::Args { config, overrides: overrides.unwrap_or_default(), workers: None, out };
    py.detach(|| phdyn_core::cli::run(&args))
}

#[pymodule]
fn phdyn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMap>()?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(cocycle_exponents, m)?)?;
    m.add_function(wrap_pyfunction!(equalize_2d, m)?)?;
    m.add_function(wrap_pyfunction!(steer_vector, m)?)?;
    m.add_function(wrap_pyfunction!(nonresonance_check, m)?)?;
    m.add_function(wrap_pyfunction!(periodic_point, m)?)?;
    m.add_function(wrap_pyfunction!(heteroclinic_scan, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
