//! Python bindings: partitions, step functions, operators, Euler solutions,
//! the density and the main bound evaluators, plus the harness commands.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use cert::bounds::{self, BoundReport, Comparison};
use cert::density;
use cert::euler::{self, Discretization};
use cert::grid;
use cert::harness::{self, Config, RunOptions};
use cert::operators::{AccretiveOperator, GraphPair, LinearOperator, Shifted, SignGraph};
use cert::space::{NormKind, NormedSpace, State};

fn err(e: cert::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn norm_kind(name: &str) -> PyResult<NormKind> {
    match name {
        "l1" => Ok(NormKind::L1),
        "l2" => Ok(NormKind::L2),
        "linf" | "inf" | "max" => Ok(NormKind::LInf),
        other => Err(PyValueError::new_err(format!("unknown norm {other:?}"))),
    }
}

fn space(dim: usize, norm: &str) -> PyResult<NormedSpace> {
    NormedSpace::new(dim, norm_kind(norm)?).map_err(err)
}

fn vector(v: &[f64]) -> State {
    State::from_column_slice(v)
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[pyclass(name = "Partition", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPartition {
    inner: Arc<grid::Partition>,
}

#[pymethods]
impl PyPartition {
    #[new]
    fn new(times: Vec<f64>) -> PyResult<Self> {
        Ok(PyPartition {
            inner: Arc::new(grid::Partition::new(times).map_err(err)?),
        })
    }

    #[staticmethod]
    fn uniform(horizon: f64, n: usize) -> PyResult<Self> {
        Ok(PyPartition {
            inner: Arc::new(grid::Partition::uniform(horizon, n).map_err(err)?),
        })
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times().to_vec()
    }

    #[getter]
    fn mesh(&self) -> f64 {
        self.inner.mesh()
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Partition(N={}, T={}, mesh={})", self.inner.len(), self.inner.horizon(), self.inner.mesh())
    }
}

#[pyclass(name = "StepFunction", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyStepFunction {
    inner: grid::StepFunction,
}

#[pymethods]
impl PyStepFunction {
    /// `values[k]` holds on `[times[k], times[k + 1])`.
    #[new]
    fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> PyResult<Self> {
        let p = grid::Partition::new(times).map_err(err)?;
        let values = values.iter().map(|v| vector(v)).collect();
        Ok(PyStepFunction {
            inner: grid::StepFunction::new(p, values).map_err(err)?,
        })
    }

    #[staticmethod]
    fn constant(horizon: f64, value: Vec<f64>) -> PyResult<Self> {
        let p = grid::Partition::uniform(horizon, 1).map_err(err)?;
        Ok(PyStepFunction {
            inner: grid::StepFunction::constant(p, vector(&value)),
        })
    }

    fn __call__(&self, t: f64) -> Vec<f64> {
        self.inner.eval(t).iter().copied().collect()
    }

    fn jump_variation(&self, norm: &str) -> PyResult<f64> {
        Ok(self.inner.jump_variation(&space(self.inner.dim(), norm)?))
    }
}

#[pyclass(name = "Operator", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyOperator {
    inner: Arc<dyn AccretiveOperator>,
}

#[pymethods]
impl PyOperator {
    /// `A = diag(diagonal)`, accretive of type `omega` in the given norm.
    #[staticmethod]
    #[pyo3(signature = (diagonal, omega, norm = "l2"))]
    fn linear(diagonal: Vec<f64>, omega: f64, norm: &str) -> PyResult<Self> {
        let sp = space(diagonal.len(), norm)?;
        Ok(PyOperator {
            inner: Arc::new(LinearOperator::diagonal(&diagonal, omega, &sp).map_err(err)?),
        })
    }

    /// Componentwise sign graph, optionally shifted by a constant.
    #[staticmethod]
    #[pyo3(signature = (dim, shift = None))]
    fn sign(dim: usize, shift: Option<Vec<f64>>) -> PyResult<Self> {
        let base: Arc<dyn AccretiveOperator> = Arc::new(SignGraph::new(dim));
        let inner = match shift {
            Some(c) => Arc::new(Shifted::new(base, vector(&c)).map_err(err)?) as Arc<dyn AccretiveOperator>,
            None => base,
        };
        Ok(PyOperator { inner })
    }

    #[getter]
    fn omega(&self) -> f64 {
        self.inner.omega()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn resolve(&self, lam: f64, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.resolve(lam, &vector(&x)).map_err(err)?.iter().copied().collect())
    }

    fn __repr__(&self) -> String {
        format!("Operator({})", self.inner.name())
    }
}

#[pyclass(name = "EulerSolution", frozen)]
struct PyEulerSolution {
    inner: euler::EulerSolution,
}

#[pymethods]
impl PyEulerSolution {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.partition().times().to_vec()
    }

    #[getter]
    fn nodes(&self) -> Vec<Vec<f64>> {
        self.inner.nodes().iter().map(|v| v.iter().copied().collect()).collect()
    }

    fn __call__(&self, t: f64) -> Vec<f64> {
        self.inner.trajectory.eval(t).iter().copied().collect()
    }
}

/// Implicit Euler scheme with the forcing averaged onto `partition`.
#[pyfunction]
fn solve(
    op: &PyOperator,
    partition: &PyPartition,
    forcing: &PyStepFunction,
    initial: Vec<f64>,
) -> PyResult<PyEulerSolution> {
    let disc = Discretization::projected(partition.inner.clone(), &forcing.inner, vector(&initial)).map_err(err)?;
    Ok(PyEulerSolution {
        inner: euler::solve_scheme(op.inner.as_ref(), &disc).map_err(err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (sol, hat, norm = "l2"))]
fn difference_matrix(sol: &PyEulerSolution, hat: &PyEulerSolution, norm: &str) -> PyResult<Vec<Vec<f64>>> {
    let sp = space(sol.inner.node(0).len(), norm)?;
    Ok(rows(&euler::difference_matrix(&sol.inner, &hat.inner, &sp)))
}

#[pyfunction]
fn phi(x: f64) -> PyResult<f64> {
    bounds::phi(x).map_err(err)
}

fn report_dict<'py>(py: Python<'py>, rep: &BoundReport) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let d = pyo3::types::PyDict::new(py);
    d.set_item("name", &rep.name)?;
    d.set_item("min_slack", rep.min_slack)?;
    d.set_item("lhs", rep.records.iter().map(|r| r.lhs).collect::<Vec<_>>())?;
    d.set_item("rhs", rep.records.iter().map(|r| r.rhs).collect::<Vec<_>>())?;
    d.set_item("i", rep.records.iter().map(|r| r.i).collect::<Vec<_>>())?;
    d.set_item("j", rep.records.iter().map(|r| r.j).collect::<Vec<_>>())?;
    Ok(d)
}

/// Main bound at every node pair; returns a dict with `min_slack`, `lhs`, `rhs`, `i`, `j`.
#[pyfunction]
#[pyo3(signature = (sol, hat, omega, u, v, g, norm = "l2"))]
#[allow(clippy::too_many_arguments)]
fn main_bound<'py>(
    py: Python<'py>,
    sol: &PyEulerSolution,
    hat: &PyEulerSolution,
    omega: f64,
    u: Vec<f64>,
    v: Vec<f64>,
    g: &PyStepFunction,
    norm: &str,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let sp = space(u.len(), norm)?;
    let cmp = Comparison::new(&sol.inner, &hat.inner, omega, &sp).map_err(err)?;
    let rep = bounds::main_bound(&cmp, &GraphPair::new(vector(&u), vector(&v)), &g.inner).map_err(err)?;
    report_dict(py, &rep)
}

/// Right-hand side of the sup-norm distance estimate.
#[pyfunction]
#[pyo3(signature = (sol, hat, omega, u, v, g, norm = "l2"))]
#[allow(clippy::too_many_arguments)]
fn distance_rhs(
    sol: &PyEulerSolution,
    hat: &PyEulerSolution,
    omega: f64,
    u: Vec<f64>,
    v: Vec<f64>,
    g: &PyStepFunction,
    norm: &str,
) -> PyResult<f64> {
    let sp = space(u.len(), norm)?;
    let pair = GraphPair::new(vector(&u), vector(&v));
    bounds::distance_rhs(&sol.inner, &hat.inner, omega, &pair, &g.inner, &sp).map_err(err)
}

/// Cell densities of `ρ^{i,j}`, strip cells included (row/column 0 is `[-1, 0)`).
#[pyfunction]
fn density_grid(rows_p: &PyPartition, cols_p: &PyPartition, i: usize, j: usize) -> PyResult<Vec<Vec<f64>>> {
    let g = density::density_forward(&rows_p.inner, &cols_p.inner, i, j).map_err(err)?;
    Ok(rows(g.cells()))
}

#[pyfunction]
fn sqrt_term(rows_p: &PyPartition, cols_p: &PyPartition, i: usize, j: usize) -> f64 {
    density::sqrt_term(&rows_p.inner, &cols_p.inner, i, j)
}

fn run_command(command: &str, config: Option<&str>, seed: Option<u64>, out: Option<PathBuf>) -> PyResult<bool> {
    let cfg = match config {
        Some(text) => Config::from_toml_str(text).map_err(err)?,
        None => Config::default(),
    };
    let opts = RunOptions {
        seed: seed.unwrap_or(cfg.seed),
        out: out.unwrap_or_else(|| PathBuf::from("out")),
        jobs: None,
    };
    let pass = match command {
        "verify" => harness::cmd_verify(&cfg, &opts).map_err(err)?.pass,
        "convergence" => harness::cmd_convergence(&cfg, &opts).map_err(err)?.pass,
        "density" => harness::cmd_density(&cfg, &opts).map_err(err)?.pass,
        "bv" => harness::cmd_bv(&cfg, &opts).map_err(err)?.pass,
        other => return Err(PyValueError::new_err(format!("unknown command {other:?}"))),
    };
    Ok(pass)
}

/// Runs a harness command (`verify`, `convergence`, `density`, `bv`) and
/// returns whether it passed. `config` is TOML text.
#[pyfunction]
#[pyo3(signature = (command, config = None, seed = None, out = None))]
fn run(py: Python<'_>, command: &str, config: Option<&str>, seed: Option<u64>, out: Option<PathBuf>) -> PyResult<bool> {
    py.detach(|| run_command(command, config, seed, out))
}

#[pymodule]
fn euler_cert(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPartition>()?;
    m.add_class::<PyStepFunction>()?;
    m.add_class::<PyOperator>()?;
    m.add_class::<PyEulerSolution>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(difference_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(phi, m)?)?;
    m.add_function(wrap_pyfunction!(main_bound, m)?)?;
    m.add_function(wrap_pyfunction!(distance_rhs, m)?)?;
    m.add_function(wrap_pyfunction!(density_grid, m)?)?;
    m.add_function(wrap_pyfunction!(sqrt_term, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
