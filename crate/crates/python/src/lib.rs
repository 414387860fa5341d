//! Python bindings: `import greenlearn`.

use std::sync::Arc;

use ::greenlearn as core;
use core::cli::{run_suite, Suite};
use core::gp::{build_mercer, sample_gp, Aabb, CovKernelSpec, Grid, DEFAULT_RANK_CUTOFF};
use core::hsops::BlackBox;
use core::oracle::{assemble, dense_green, kappa_c, CoefficientField};
use core::partition::{build_partition, choose_levels, effective_epsilon, target_rank, DEFAULT_RHO};
use core::reconstruct::{global_error, learn_green, HierGreenDocument, LearnOptions};
use nalgebra::DVector;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: core::Error) -> PyErr {
    match e {
        core::Error::InvalidParameter(_)
        | core::Error::InvalidGrid(_)
        | core::Error::GridMismatch(_)
        | core::Error::OutsideDomain(_)
        | core::Error::UnsupportedCoefficient(_)
        | core::Error::PartitionTooLarge { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Serialize through JSON into plain Python dicts and lists.
fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

fn parse_kernel(spec: &str) -> PyResult<CovKernelSpec> {
    core::cli::parse_kernel(spec).map_err(err)
}

/// Uniform tensor grid on the unit cube, boundary nodes included.
#[pyclass(name = "Grid", module = "greenlearn", frozen)]
struct PyGrid {
    inner: Arc<Grid>,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(dim: usize, n: usize) -> PyResult<Self> {
        Ok(PyGrid { inner: Arc::new(Grid::uniform(Aabb::unit(dim), n).map_err(err)?) })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn nodes(&self) -> Vec<Vec<f64>> {
        let d = self.inner.dim();
        self.inner.nodes().iter().map(|p| p[..d].to_vec()).collect()
    }

    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }
}

/// Mercer eigenpairs of a covariance kernel, used to draw Gaussian-process samples.
#[pyclass(name = "MercerBasis", module = "greenlearn", frozen)]
struct PyMercer {
    inner: core::gp::MercerBasis,
}

#[pymethods]
impl PyMercer {
    #[new]
    #[pyo3(signature = (grid, kernel = "se:0.2", cutoff = DEFAULT_RANK_CUTOFF))]
    fn new(grid: &PyGrid, kernel: &str, cutoff: f64) -> PyResult<Self> {
        Ok(PyMercer { inner: build_mercer(&parse_kernel(kernel)?, &grid.inner, cutoff).map_err(err)? })
    }

    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues().to_vec()
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank()
    }

    #[getter]
    fn trace(&self) -> f64 {
        self.inner.trace()
    }

    /// `count` samples, one list of node values per sample.
    fn sample(&self, count: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let q = sample_gp(&self.inner, count, seed).map_err(err)?;
        Ok((0..q.count()).map(|j| q.column(j).as_slice().to_vec()).collect())
    }
}

/// Finite-difference solver for `-div(A grad u) = f` with zero Dirichlet data,
/// used as a query-counted black box.
#[pyclass(name = "EllipticOracle", module = "greenlearn", frozen)]
struct PyOracle {
    inner: core::oracle::EllipticOracle,
}

#[pymethods]
impl PyOracle {
    #[new]
    #[pyo3(signature = (grid, coeff = "identity"))]
    fn new(grid: &PyGrid, coeff: &str) -> PyResult<Self> {
        let c: CoefficientField = coeff.parse().map_err(err)?;
        Ok(PyOracle { inner: assemble(&c, &grid.inner).map_err(err)? })
    }

    fn apply(&self, f: Vec<f64>) -> PyResult<Vec<f64>> {
        let u = self.inner.apply(&DVector::from_vec(f)).map_err(err)?;
        Ok(u.as_slice().to_vec())
    }

    #[getter]
    fn query_count(&self) -> usize {
        self.inner.query_count()
    }

    fn reset_query_count(&self) {
        self.inner.reset_query_count()
    }

    #[getter]
    fn interior_count(&self) -> usize {
        self.inner.interior_count()
    }

    fn kappa(&self) -> PyResult<f64> {
        kappa_c(self.inner.coefficient(), self.inner.grid()).map_err(err)
    }

    /// Dense discrete Green's function on the full grid, row-major.
    fn dense_green(&self) -> PyResult<Vec<Vec<f64>>> {
        let d = dense_green(&self.inner).map_err(err)?;
        let v = d.values();
        Ok((0..v.nrows()).map(|i| v.row(i).iter().copied().collect()).collect())
    }
}

/// Hierarchical low-rank approximant of a Green's function.
#[pyclass(name = "HierGreen", module = "greenlearn", frozen)]
struct PyHierGreen {
    inner: core::reconstruct::HierGreen,
}

#[pymethods]
impl PyHierGreen {
    #[getter]
    fn total_queries(&self) -> usize {
        self.inner.total_queries()
    }

    #[getter]
    fn learned_pairs(&self) -> usize {
        self.inner.learned_pairs()
    }

    #[getter]
    fn admissible_blocks(&self) -> usize {
        self.inner.blocks().len()
    }

    fn settings<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.inner.settings())
    }

    fn evaluate(&self, x: usize, y: usize) -> PyResult<f64> {
        self.inner.evaluate(x, y).map_err(err)
    }

    fn evaluate_at(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        self.inner.evaluate_at(&x, &y).map_err(err)
    }

    fn apply(&self, f: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.apply_green(&DVector::from_vec(f)).map_err(err)?.as_slice().to_vec())
    }

    /// Relative and per-block errors against the oracle's dense reference.
    fn error_report<'py>(&self, py: Python<'py>, oracle: &PyOracle) -> PyResult<Bound<'py, PyAny>> {
        let r = dense_green(&oracle.inner).map_err(err)?;
        to_py(py, &global_error(&self.inner, &r).map_err(err)?)
    }

    fn to_json(&self) -> PyResult<String> {
        core::io::to_json(&self.inner.to_document()).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let doc: HierGreenDocument = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyHierGreen { inner: doc.to_green().map_err(err)? })
    }
}

#[pyfunction]
#[pyo3(signature = (oracle, epsilon = 0.1, k = None, p = None, levels = None, kernel = "se:0.05", seed = 0, c_kappa = 1.0, c_sep = 1.0, rho = DEFAULT_RHO))]
#[allow(clippy::too_many_arguments)]
fn learn(
    py: Python<'_>,
    oracle: &PyOracle,
    epsilon: f64,
    k: Option<usize>,
    p: Option<usize>,
    levels: Option<u32>,
    kernel: &str,
    seed: u64,
    c_kappa: f64,
    c_sep: f64,
    rho: f64,
) -> PyResult<PyHierGreen> {
    let spec = parse_kernel(kernel)?;
    let opts = LearnOptions { epsilon, k, p, levels, c_kappa, c_sep, rho, seed };
    let inner = py.detach(|| learn_green(&oracle.inner, &spec, &opts)).map_err(err)?;
    Ok(PyHierGreen { inner })
}

/// Counts and admissible pairs of the hierarchical partition of the unit cube.
#[pyfunction]
#[pyo3(signature = (dim, levels, rho = DEFAULT_RHO))]
fn partition<'py>(py: Python<'py>, dim: usize, levels: u32, rho: f64) -> PyResult<Bound<'py, PyAny>> {
    let p = build_partition(dim, levels, rho).map_err(err)?;
    #[derive(Serialize)]
    struct Out<'a> {
        counts: core::partition::PartitionCounts,
        admissible: Vec<(&'a Aabb, &'a Aabb, u32)>,
    }
    to_py(py, &Out { counts: p.counts(), admissible: p.admissible.iter().map(|b| (&b.x, &b.y, b.level)).collect() })
}

/// Levels, effective ε and block rank chosen for a target accuracy.
#[pyfunction]
#[pyo3(signature = (epsilon, c_kappa = 1.0, c_sep = 1.0))]
fn schedule(epsilon: f64, c_kappa: f64, c_sep: f64) -> PyResult<(u32, f64, usize)> {
    let n = choose_levels(epsilon, c_kappa).map_err(err)?;
    Ok((n, effective_epsilon(n, c_kappa), target_rank(epsilon, c_sep).map_err(err)?))
}

/// Rows of a bound-verification suite as dicts.
#[pyfunction]
#[pyo3(signature = (suite = "deterministic", trials = None, seed = 0))]
fn verify_bounds<'py>(py: Python<'py>, suite: &str, trials: Option<usize>, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    use clap::ValueEnum;
    let s = Suite::from_str(suite, true).map_err(PyValueError::new_err)?;
    let rows = py.detach(|| run_suite(s, trials, seed)).map_err(err)?;
    to_py(py, &rows)
}

#[pymodule]
fn greenlearn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", core::io::VERSION)?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyMercer>()?;
    m.add_class::<PyOracle>()?;
    m.add_class::<PyHierGreen>()?;
    m.add_function(wrap_pyfunction!(learn, m)?)?;
    m.add_function(wrap_pyfunction!(partition, m)?)?;
    m.add_function(wrap_pyfunction!(schedule, m)?)?;
    m.add_function(wrap_pyfunction!(verify_bounds, m)?)?;
    Ok(())
}
