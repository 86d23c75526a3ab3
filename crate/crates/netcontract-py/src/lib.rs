//! Python bindings for `netcontract`.
//!
//! Problems and contracts are Python classes backed by the Rust types. Results
//! are returned as plain Python objects (dicts, lists and floats) with the same
//! field names as the JSON output of the command-line tool.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::Serialize;

use netcontract::contract_opt::{
    closed_form_ces, closed_form_cobb_douglas, optimal_active_set_with_cap, optimize_general,
    optimize_quadratic_binary, total_share_root as core_total_share_root, OptimizerOptions,
};
use netcontract::diagnostics::compute_balance_report;
use netcontract::equilibrium::{solve_equilibrium_general, solve_equilibrium_quadratic_binary, EquilibriumResult};
use netcontract::equity::{optimize_equity, solve_equity_equilibrium};
use netcontract::model;
use netcontract::statics::{dperformance_dlink, dshare_dlink, parse_grid, sweep as core_sweep, SweepParameter};

create_exception!(netcontract, SolverError, PyException, "A solver failed on well-formed input.");

fn to_py_err(e: netcontract::Error) -> PyErr {
    let message = format!("{}: {e}", e.kind());
    if e.is_input_error() {
        PyValueError::new_err(message)
    } else {
        SolverError::new_err(message)
    }
}

/// Convert a serializable value into Python objects through JSON.
fn to_python<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// A contracting problem: production, outcome model, utilities and costs.
#[pyclass(name = "Problem", module = "netcontract", from_py_object)]
#[derive(Clone)]
struct PyProblem {
    inner: model::Problem,
}

#[pymethods]
impl PyProblem {
    /// Parse a problem from its JSON text.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        model::Problem::from_json(text).map(|inner| Self { inner }).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Quadratic network problem with a binary outcome and `P(Y) = min(slope Y, 1)`.
    #[staticmethod]
    #[pyo3(signature = (weights, slope, standalone=None))]
    fn quadratic_binary(weights: Vec<Vec<f64>>, slope: f64, standalone: Option<Vec<f64>>) -> Self {
        let network = model::Network::from_rows(&weights);
        let success = model::SuccessProbability::LinearCapped { slope };
        Self { inner: model::Problem::quadratic_binary(network, standalone, success) }
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn num_outcomes(&self) -> usize {
        self.inner.num_outcomes()
    }

    /// Violated invariants as `(field, message)` pairs; empty when well formed.
    fn validate(&self) -> Vec<(String, String)> {
        self.inner.validate().violations.into_iter().map(|v| (v.field, v.message)).collect()
    }

    fn __repr__(&self) -> String {
        format!("Problem(n={}, outcomes={})", self.inner.n, self.inner.num_outcomes())
    }
}

/// Payments `tau[i][s]` to agent `i` in outcome `s`.
#[pyclass(name = "Contract", module = "netcontract", from_py_object)]
#[derive(Clone)]
struct PyContract {
    inner: model::Contract,
}

#[pymethods]
impl PyContract {
    #[new]
    fn new(payments: Vec<Vec<f64>>) -> PyResult<Self> {
        let width = payments.first().map_or(0, Vec::len);
        if payments.iter().any(|row| row.len() != width) {
            return Err(PyValueError::new_err("payment rows must have equal length"));
        }
        Ok(Self { inner: model::Contract::from_rows(&payments) })
    }

    /// Binary-outcome contract paying `tau[i]` on success only.
    #[staticmethod]
    fn success_only(tau: Vec<f64>) -> Self {
        Self { inner: model::Contract::success_only(&tau) }
    }

    /// Contract paying `shares[i] * revenues[s]`.
    #[staticmethod]
    fn equity(shares: Vec<f64>, revenues: Vec<f64>) -> Self {
        Self { inner: model::EquityContract { shares }.to_contract(&revenues) }
    }

    #[getter]
    fn payments(&self) -> Vec<Vec<f64>> {
        self.inner.payments.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    fn __repr__(&self) -> String {
        format!("Contract({:?})", self.payments())
    }
}

fn options(starts: Option<usize>) -> OptimizerOptions {
    let mut opts = OptimizerOptions::default();
    if let Some(s) = starts {
        opts.starts = s;
    }
    opts
}

fn default_init(problem: &model::Problem) -> Vec<f64> {
    vec![if problem.production.singular_at_zero() { 1.0 } else { 0.0 }; problem.n]
}

/// Equilibrium by the quadratic-binary solver when the problem and contract
/// allow it, by the general solver otherwise.
fn equilibrium_auto(
    problem: &model::Problem,
    contract: &model::Contract,
    init: Option<Vec<f64>>,
) -> netcontract::Result<EquilibriumResult> {
    let quadratic = problem.as_quadratic_binary().filter(|_| contract.outcome_column(0).iter().all(|&t| t == 0.0));
    match (quadratic, init) {
        (Some(qb), None) => {
            solve_equilibrium_quadratic_binary(&qb.network, &qb.standalone, &contract.outcome_column(1), &qb.success)
        }
        (_, init) => solve_equilibrium_general(problem, contract, &init.unwrap_or_else(|| default_init(problem))),
    }
}

/// Effort equilibrium of `problem` under `contract`. Passing `init` forces the
/// general solver started from that profile.
#[pyfunction]
#[pyo3(signature = (problem, contract, init=None))]
fn solve_equilibrium(
    py: Python<'_>,
    problem: &PyProblem,
    contract: &PyContract,
    init: Option<Vec<f64>>,
) -> PyResult<Py<PyAny>> {
    let eq = py.detach(|| equilibrium_auto(&problem.inner, &contract.inner, init)).map_err(to_py_err)?;
    to_python(py, &eq)
}

/// Centralities, marginal performance and balance residuals of a contract.
#[pyfunction]
fn balance_report(py: Python<'_>, problem: &PyProblem, contract: &PyContract) -> PyResult<Py<PyAny>> {
    let report = py
        .detach(|| {
            let eq = equilibrium_auto(&problem.inner, &contract.inner, None)?;
            compute_balance_report(&problem.inner, &contract.inner, &eq)
        })
        .map_err(to_py_err)?;
    to_python(py, &report)
}

/// Optimal contract. `method` is `general`, `quadratic`, `cobb-douglas` or `ces`.
#[pyfunction]
#[pyo3(signature = (problem, method="general", starts=None))]
fn optimize(py: Python<'_>, problem: &PyProblem, method: &str, starts: Option<usize>) -> PyResult<Py<PyAny>> {
    let opts = options(starts);
    let p = &problem.inner;
    let binary_success = || {
        p.outcomes.success().cloned().ok_or_else(|| PyValueError::new_err("closed forms need a binary outcome"))
    };
    let result = match method {
        "general" => py.detach(|| optimize_general(p, &opts)),
        "quadratic" => {
            let qb = p
                .as_quadratic_binary()
                .ok_or_else(|| PyValueError::new_err("needs a quadratic network problem with a binary outcome"))?;
            py.detach(|| optimize_quadratic_binary(&qb.network, &qb.success, &opts))
        }
        "cobb-douglas" => match &p.production {
            model::ProductionFunction::CobbDouglas { gamma } => {
                let success = binary_success()?;
                py.detach(|| closed_form_cobb_douglas(gamma, &success))
            }
            _ => return Err(PyValueError::new_err("needs cobb_douglas production")),
        },
        "ces" => match &p.production {
            model::ProductionFunction::Ces { gamma, rho, kappa } => {
                let success = binary_success()?;
                py.detach(|| closed_form_ces(gamma, *rho, *kappa, &success))
            }
            _ => return Err(PyValueError::new_err("needs ces production")),
        },
        other => return Err(PyValueError::new_err(format!("unknown method {other:?}"))),
    }
    .map_err(to_py_err)?;
    to_python(py, &result)
}

/// Candidate active sets of a quadratic network problem, best first.
#[pyfunction]
#[pyo3(signature = (problem, cap=16))]
fn optimal_active_set(py: Python<'_>, problem: &PyProblem, cap: usize) -> PyResult<Py<PyAny>> {
    let qb = problem
        .inner
        .as_quadratic_binary()
        .ok_or_else(|| PyValueError::new_err("needs a quadratic network problem with a binary outcome"))?;
    let candidates = optimal_active_set_with_cap(&qb.network, &qb.success, cap).map_err(to_py_err)?;
    to_python(py, &candidates)
}

/// Link derivatives of the optimal payments and performance of a quadratic network problem.
#[pyfunction]
fn statics(py: Python<'_>, problem: &PyProblem) -> PyResult<Py<PyAny>> {
    let qb = problem
        .inner
        .as_quadratic_binary()
        .ok_or_else(|| PyValueError::new_err("needs a quadratic network problem with a binary outcome"))?;
    let (shares, performance) = py
        .detach(|| {
            let opt = optimize_quadratic_binary(&qb.network, &qb.success, &OptimizerOptions::default())?;
            Ok::<_, netcontract::Error>((dshare_dlink(&qb.network, &qb.success, &opt)?, dperformance_dlink(&qb.network, &qb.success, &opt)?))
        })
        .map_err(to_py_err)?;
    let performance: Vec<Vec<f64>> = performance.row_iter().map(|r| r.iter().copied().collect()).collect();
    to_python(py, &serde_json::json!({ "dshare_dlink": shares, "dperformance_dlink": performance }))
}

/// Re-optimize over `grid` (`start:stop:step`) of `param` (`beta`, `G<i><j>`) and return the CSV text.
#[pyfunction]
#[pyo3(signature = (problem, param, grid, jobs=0))]
fn sweep(py: Python<'_>, problem: &PyProblem, param: &str, grid: &str, jobs: usize) -> PyResult<String> {
    let param: SweepParameter = param.parse().map_err(|e: netcontract::Error| PyValueError::new_err(e.to_string()))?;
    let grid = parse_grid(grid).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let curve = py
        .detach(|| core_sweep(&problem.inner, param, &grid, &OptimizerOptions::default(), jobs))
        .map_err(to_py_err)?;
    curve.to_csv(problem.inner.n).map_err(to_py_err)
}

/// Equilibrium under the contract paying `shares[i]` of every revenue to agent `i`.
#[pyfunction]
fn solve_equity(py: Python<'_>, problem: &PyProblem, shares: Vec<f64>) -> PyResult<Py<PyAny>> {
    let sigma = model::EquityContract { shares };
    let eq = py.detach(|| solve_equity_equilibrium(&problem.inner, &sigma)).map_err(to_py_err)?;
    to_python(py, &eq)
}

/// Optimal equity shares with balance diagnostics and the unrestricted optimal payoff.
#[pyfunction]
#[pyo3(signature = (problem, starts=None))]
fn optimize_equity_shares(py: Python<'_>, problem: &PyProblem, starts: Option<usize>) -> PyResult<Py<PyAny>> {
    let opts = options(starts);
    let (shares, diagnostics) = py.detach(|| optimize_equity(&problem.inner, &opts)).map_err(to_py_err)?;
    to_python(py, &serde_json::json!({ "shares": shares.shares, "diagnostics": diagnostics }))
}

/// Optimal total share of a clique under a linear success probability.
#[pyfunction]
fn total_share_root(beta: f64, kappa: f64, kstar: f64) -> PyResult<f64> {
    core_total_share_root(beta, kappa, kstar).map_err(to_py_err)
}

#[pymodule(name = "netcontract")]
fn netcontract_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PyContract>()?;
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    m.add_function(wrap_pyfunction!(solve_equilibrium, m)?)?;
    m.add_function(wrap_pyfunction!(balance_report, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_active_set, m)?)?;
    m.add_function(wrap_pyfunction!(statics, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(solve_equity, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_equity_shares, m)?)?;
    m.add_function(wrap_pyfunction!(total_share_root, m)?)?;
    Ok(())
}
