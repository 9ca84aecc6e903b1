//! Python bindings for the kink and droplet solvers and the exact oracle.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use xxz_droplet::droplet as drop;
use xxz_droplet::oracle::{self, DEFAULT_SECTOR_CAP};
use xxz_droplet::verification;
use xxz_droplet::{ChainGeometry, DropletParams, Error, KinkParams, Topology};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(msg) => PyValueError::new_err(msg),
        other => PyRuntimeError::new_err(format!("{}: {other}", other.kind())),
    }
}

/// Converts a serializable value into plain Python objects via `json`.
fn to_object<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(name = "KinkSolution", module = "xxzdroplet", frozen)]
struct PyKinkSolution(xxz_droplet::KinkSolution);

#[pymethods]
impl PyKinkSolution {
    /// Ground energy `2 + E`.
    #[getter]
    fn energy(&self) -> f64 {
        self.0.energy()
    }

    /// Energy shift `E`.
    #[getter]
    fn shift(&self) -> f64 {
        self.0.coefficients.shift
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.0.iterations
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.0.residual
    }

    /// `(sites, w, value)` for every stored configuration.
    fn coefficients(&self) -> Vec<(Vec<usize>, usize, f64)> {
        self.0.to_dump().coefficients.into_iter().map(|c| (c.sites, c.w, c.value)).collect()
    }

    fn coefficient(&self, sites: Vec<usize>) -> Option<f64> {
        self.0.coefficient(xxz_droplet::SiteSet::from_sites(sites))
    }

    fn decay_constant(&self) -> PyResult<f64> {
        self.0.decay_constant().map_err(to_py)
    }

    #[pyo3(signature = (cap = DEFAULT_SECTOR_CAP))]
    fn eigen_residual(&self, cap: usize) -> PyResult<f64> {
        self.0.eigen_residual(cap).map_err(to_py)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_object(py, &self.0.to_dump())
    }

    fn __repr__(&self) -> String {
        let p = self.0.system.params();
        format!("KinkSolution(N={}, m={}, epsilon={}, energy={})", p.sites, p.down, p.epsilon, self.0.energy())
    }
}

#[pyclass(name = "DropletSolution", module = "xxzdroplet", frozen)]
struct PyDropletSolution(drop::DropletSolution);

#[pymethods]
impl PyDropletSolution {
    /// Fourier coefficients `[e_1, ..., e_N]`.
    #[getter]
    fn fourier(&self) -> Vec<f64> {
        self.0.coefficients.fourier.clone()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.0.iterations
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.0.residual
    }

    /// `(k_index, k, E(k))` on the momentum grid.
    fn dispersion(&self) -> PyResult<Vec<(usize, f64, f64)>> {
        let d = self.0.dispersion().map_err(to_py)?;
        Ok(d.samples.iter().map(|s| (s.k_index, s.k, s.energy)).collect())
    }

    fn bandwidth(&self) -> PyResult<f64> {
        Ok(self.0.dispersion().map_err(to_py)?.bandwidth)
    }

    fn coefficient(&self, sites: Vec<usize>) -> f64 {
        self.0.system.coefficient(&self.0.coefficients, xxz_droplet::SiteSet::from_sites(sites))
    }

    fn decay_constant(&self) -> PyResult<f64> {
        self.0.decay_constant().map_err(to_py)
    }

    #[pyo3(signature = (k_index, cap = DEFAULT_SECTOR_CAP))]
    fn eigen_residual(&self, k_index: usize, cap: usize) -> PyResult<f64> {
        self.0.eigen_residual(k_index, cap).map_err(to_py)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_object(py, &self.0.to_dump().map_err(to_py)?)
    }

    fn __repr__(&self) -> String {
        let p = self.0.system.params();
        format!("DropletSolution(N={}, m={}, epsilon={}, w_max={})", p.sites, p.down, p.epsilon, p.w_max)
    }
}

#[allow(clippy::too_many_arguments)]
#[pyfunction]
#[pyo3(signature = (sites, down, epsilon, field_a = 1.0, field_b = 1.0, w_max = 8, tol = 1e-13, max_iter = 1000, weight_k = 10.0))]
fn solve_kink(
    py: Python<'_>,
    sites: usize,
    down: usize,
    epsilon: f64,
    field_a: f64,
    field_b: f64,
    w_max: usize,
    tol: f64,
    max_iter: usize,
    weight_k: f64,
) -> PyResult<PyKinkSolution> {
    let p = KinkParams { sites, down, epsilon, field_a, field_b, w_max, tol, max_iter, weight_k };
    py.detach(|| xxz_droplet::solve_kink(p)).map(PyKinkSolution).map_err(to_py)
}

#[allow(clippy::too_many_arguments)]
#[pyfunction]
#[pyo3(signature = (sites, down, epsilon, w_max = 7, tol = 1e-13, max_iter = 1000, weight_k = 10.0))]
fn solve_droplet(
    py: Python<'_>,
    sites: usize,
    down: usize,
    epsilon: f64,
    w_max: usize,
    tol: f64,
    max_iter: usize,
    weight_k: f64,
) -> PyResult<PyDropletSolution> {
    let p = DropletParams { sites, down, epsilon, w_max, tol, max_iter, weight_k };
    py.detach(|| xxz_droplet::solve_droplet(p)).map(PyDropletSolution).map_err(to_py)
}

/// Exact single-magnon band `(k_index, k, E(k))`.
#[pyfunction]
#[pyo3(signature = (sites, epsilon, cap = DEFAULT_SECTOR_CAP))]
fn one_magnon_dispersion(sites: usize, epsilon: f64, cap: usize) -> PyResult<Vec<(usize, f64, f64)>> {
    let d = drop::one_magnon_dispersion(sites, epsilon, cap).map_err(to_py)?;
    Ok(d.samples.iter().map(|s| (s.k_index, s.k, s.energy)).collect())
}

/// Sorted spectrum of the open chain in the `down`-spin sector.
#[pyfunction]
#[pyo3(signature = (sites, down, epsilon, field_a = 1.0, field_b = 1.0, cap = DEFAULT_SECTOR_CAP))]
fn open_spectrum(py: Python<'_>, sites: usize, down: usize, epsilon: f64, field_a: f64, field_b: f64, cap: usize) -> PyResult<Vec<f64>> {
    py.detach(|| oracle::open_spectrum(sites, down, epsilon, field_a, field_b, cap)).map_err(to_py)
}

/// Sorted eigenvalues of each momentum block of the ring, indexed by `j`.
#[pyfunction]
#[pyo3(signature = (sites, down, epsilon, cap = DEFAULT_SECTOR_CAP))]
fn momentum_spectra(py: Python<'_>, sites: usize, down: usize, epsilon: f64, cap: usize) -> PyResult<Vec<Vec<f64>>> {
    let blocks = py.detach(|| oracle::build_periodic_blocks(sites, down, epsilon, cap, false)).map_err(to_py)?;
    Ok(blocks.into_iter().map(|b| b.eigenvalues).collect())
}

/// Expansion-vs-oracle report as a dict.
#[pyfunction]
#[pyo3(signature = (sites, down, epsilon, w_max = 7, cap = DEFAULT_SECTOR_CAP))]
fn verify<'py>(py: Python<'py>, sites: usize, down: usize, epsilon: f64, w_max: usize, cap: usize) -> PyResult<Bound<'py, PyAny>> {
    let p = DropletParams::new(sites, down, epsilon).with_w_max(w_max);
    let report = py.detach(|| verification::verify(&p, None, cap)).map_err(to_py)?;
    to_object(py, &report)
}

/// `(sites, w, walls)` for each configuration of the truncated space.
#[pyfunction]
#[pyo3(signature = (sites, down, w_max, periodic = true))]
fn enumerate(sites: usize, down: usize, w_max: usize, periodic: bool) -> PyResult<Vec<(Vec<usize>, usize, usize)>> {
    let topology = if periodic { Topology::Periodic } else { Topology::Open };
    let geometry = ChainGeometry::new(sites, topology).map_err(to_py)?;
    let space = xxz_droplet::enumerate(geometry, down, w_max).map_err(to_py)?;
    Ok(space.entries().iter().map(|e| (e.sites.to_vec(), e.w, e.walls)).collect())
}

#[pymodule]
pub fn xxzdroplet(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKinkSolution>()?;
    m.add_class::<PyDropletSolution>()?;
    m.add_function(wrap_pyfunction!(solve_kink, m)?)?;
    m.add_function(wrap_pyfunction!(solve_droplet, m)?)?;
    m.add_function(wrap_pyfunction!(one_magnon_dispersion, m)?)?;
    m.add_function(wrap_pyfunction!(open_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(momentum_spectra, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate, m)?)?;
    m.add("DEFAULT_SECTOR_CAP", DEFAULT_SECTOR_CAP)?;
    Ok(())
}
