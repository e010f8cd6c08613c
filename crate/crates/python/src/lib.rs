//! Python bindings: configs, archives, two-point tables and a few
//! closed-form helpers.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

use lab::error::LabError;
use lab::expansion::{auto_layout, pc_expansion_reference};
use lab::experiment::{self, ExperimentConfig, ResultArchive};
use lab::fourier::{self, GreenParams, Momentum, MomentumGrid};
use lab::lattice::{Boundary, BoxSpec};
use lab::percolation::enumerate::ExactTables;
use lab::percolation::estimators::estimate_two_point_on;
use lab::percolation::TwoPointTable;
use lab::rng::RngStream;

fn err(e: LabError) -> PyErr {
    match e {
        LabError::InvalidArgument(_) | LabError::DimensionMismatch { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py(py: Python<'_>, v: &impl serde::Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn layout_for(dim: usize, side: u64, boundary: &str) -> Result<lab::field::Layout, LabError> {
    match boundary.parse::<Boundary>()? {
        Boundary::Torus => auto_layout(dim, side),
        Boundary::Free => Ok(lab::field::Layout::dense(&BoxSpec::free(dim, side)?)),
    }
}

/// Run configuration for one subcommand.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (command, dim=2, side=16, p=vec![0.5], samples=10_000, seed=1, stream=0, threads=1,
                        boundary="torus", k_grid="axis", out=None, format="csv", options=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        command: &str,
        dim: usize,
        side: u64,
        p: Vec<f64>,
        samples: u64,
        seed: u64,
        stream: u64,
        threads: usize,
        boundary: &str,
        k_grid: &str,
        out: Option<PathBuf>,
        format: &str,
        options: Option<BTreeMap<String, String>>,
    ) -> PyResult<Self> {
        let mut c = ExperimentConfig::new(command);
        c.dim = dim;
        c.side = side;
        c.p_grid = p;
        c.n_samples = samples;
        c.seed = seed;
        c.stream = stream;
        c.threads = threads;
        c.boundary = boundary.parse().map_err(err)?;
        c.k_grid = k_grid.parse().map_err(err)?;
        c.format = format.parse().map_err(err)?;
        if let Some(out) = out {
            c.out = out;
        }
        c.options = options.unwrap_or_default();
        c.validate().map_err(err)?;
        Ok(PyConfig { inner: c })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: ExperimentConfig = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyConfig { inner })
    }

    #[getter]
    fn command(&self) -> String {
        self.inner.command.clone()
    }

    fn __repr__(&self) -> String {
        format!("Config({}, dim={}, side={})", self.inner.command, self.inner.dim, self.inner.side)
    }
}

/// Report tables plus the manifest of the run that made them.
#[pyclass(name = "Archive", from_py_object)]
#[derive(Clone)]
struct PyArchive {
    inner: ResultArchive,
}

#[pymethods]
impl PyArchive {
    #[getter]
    fn tables(&self) -> Vec<String> {
        self.inner.manifest.tables.clone()
    }

    #[getter]
    fn flags(&self) -> Vec<String> {
        self.inner.manifest.flags.clone()
    }

    #[getter]
    fn wall_seconds(&self) -> f64 {
        self.inner.manifest.wall_seconds
    }

    /// Rows as (key columns, estimate, stderr, n).
    fn rows(&self, name: &str) -> PyResult<Vec<(Vec<String>, f64, f64, u64)>> {
        let t = self.inner.table(name).ok_or_else(|| PyValueError::new_err(format!("no table '{name}'")))?;
        Ok(t.rows.iter().map(|r| (r.key.clone(), r.estimate, r.stderr, r.n)).collect())
    }

    fn columns(&self, name: &str) -> PyResult<Vec<String>> {
        let t = self.inner.table(name).ok_or_else(|| PyValueError::new_err(format!("no table '{name}'")))?;
        Ok(t.header())
    }

    fn csv(&self, name: &str) -> PyResult<String> {
        let t = self.inner.table(name).ok_or_else(|| PyValueError::new_err(format!("no table '{name}'")))?;
        t.to_csv().map_err(err)
    }

    fn write(&self, dir: PathBuf) -> PyResult<Vec<PathBuf>> {
        self.inner.write(&dir).map_err(err)
    }

    #[staticmethod]
    fn read(dir: PathBuf) -> PyResult<Self> {
        Ok(PyArchive { inner: ResultArchive::read(&dir).map_err(err)? })
    }
}

/// Monte Carlo two-point function on a box.
#[pyclass(name = "TwoPoint", frozen)]
struct PyTwoPoint {
    inner: TwoPointTable,
    p: f64,
}

#[pymethods]
impl PyTwoPoint {
    /// (estimate, stderr, n) of the connection probability to `x`.
    fn at(&self, x: Vec<i64>) -> PyResult<(f64, f64, u64)> {
        if x.len() != self.inner.layout().dim() {
            return Err(PyValueError::new_err("coordinate length differs from the dimension"));
        }
        let e = self.inner.at(&x);
        Ok((e.value, e.stderr, e.n))
    }

    fn susceptibility(&self) -> (f64, f64) {
        let e = self.inner.susceptibility();
        (e.value, e.stderr)
    }

    fn mean_cluster_size(&self) -> (f64, f64) {
        let e = self.inner.mean_cluster_size();
        (e.value, e.stderr)
    }

    #[getter]
    fn n_samples(&self) -> u64 {
        self.inner.n_samples()
    }

    #[getter]
    fn p(&self) -> f64 {
        self.p
    }

    /// Bootstrap functions over the given momentum grid, as a dict.
    #[pyo3(signature = (k_grid="axis", seed=1))]
    fn bootstrap(&self, py: Python<'_>, k_grid: &str, seed: u64) -> PyResult<Py<PyAny>> {
        let grid: MomentumGrid = k_grid.parse().map_err(err)?;
        let ks = grid.indices(self.inner.layout(), &RngStream::new(seed, 0));
        let r = lab::bootstrap::bootstrap_f(&self.inner, &ks, &ks).map_err(err)?;
        to_py(py, &r)
    }
}

#[pyfunction]
fn run(py: Python<'_>, config: PyConfig) -> PyResult<PyArchive> {
    let out = py.detach(|| experiment::run(&config.inner)).map_err(err)?;
    Ok(PyArchive { inner: out.archive })
}

#[pyfunction]
fn merge(archives: Vec<PyArchive>) -> PyResult<PyArchive> {
    let inner: Vec<ResultArchive> = archives.into_iter().map(|a| a.inner).collect();
    Ok(PyArchive { inner: experiment::merge(&inner).map_err(err)? })
}

#[pyfunction]
#[pyo3(signature = (dim, side, p, samples, seed=1, boundary="torus"))]
fn two_point(py: Python<'_>, dim: usize, side: u64, p: f64, samples: u64, seed: u64, boundary: &str) -> PyResult<PyTwoPoint> {
    let layout = layout_for(dim, side, boundary).map_err(err)?;
    let inner = py.detach(|| estimate_two_point_on(&layout, p, samples, &RngStream::new(seed, 0))).map_err(err)?;
    Ok(PyTwoPoint { inner, p })
}

/// Exact connection probabilities on a small box, as (coords, value) pairs.
#[pyfunction]
#[pyo3(signature = (dim, side, p, boundary="torus", which="tau"))]
fn exact(dim: usize, side: u64, p: f64, boundary: &str, which: &str) -> PyResult<Vec<(Vec<i64>, f64)>> {
    let spec = BoxSpec::new(dim, side, boundary.parse().map_err(err)?).map_err(err)?;
    let t = ExactTables::enumerate(&spec).map_err(err)?;
    let f = match which {
        "tau" => t.tau(p),
        "doubly" => t.doubly(p),
        "pi0" => t.pi0(p),
        other => return Err(PyValueError::new_err(format!("unknown table '{other}' (tau|doubly|pi0)"))),
    };
    Ok((0..f.values.len()).map(|c| (f.layout.representative(c), f.values[c])).collect())
}

#[pyfunction]
fn d_hat(k: Vec<f64>) -> f64 {
    fourier::d_hat(&Momentum::new(k))
}

#[pyfunction]
fn green_hat(lambda_: f64, k: Vec<f64>) -> PyResult<f64> {
    let g = GreenParams::new(lambda_).map_err(err)?;
    fourier::green_hat(g, &Momentum::new(k)).map_err(err)
}

/// Monte Carlo momentum integral; returns (estimate, stderr).
#[pyfunction]
#[pyo3(signature = (m, n, lambda_, dim, samples, seed=1))]
fn rw_integral(m: u32, n: f64, lambda_: f64, dim: usize, samples: u64, seed: u64) -> PyResult<(f64, f64)> {
    let g = GreenParams::new(lambda_).map_err(err)?;
    let r = fourier::rw_integral(m, n, g, dim, samples, &RngStream::new(seed, 0)).map_err(err)?;
    Ok((r.estimate.value, r.estimate.stderr))
}

#[pyfunction]
fn pc_series(dim: usize, order: usize) -> PyResult<f64> {
    pc_expansion_reference(dim, order).map_err(err)
}

#[pymodule]
fn lacelab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyArchive>()?;
    m.add_class::<PyTwoPoint>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(merge, m)?)?;
    m.add_function(wrap_pyfunction!(two_point, m)?)?;
    m.add_function(wrap_pyfunction!(exact, m)?)?;
    m.add_function(wrap_pyfunction!(d_hat, m)?)?;
    m.add_function(wrap_pyfunction!(green_hat, m)?)?;
    m.add_function(wrap_pyfunction!(rw_integral, m)?)?;
    m.add_function(wrap_pyfunction!(pc_series, m)?)?;
    Ok(())
}
