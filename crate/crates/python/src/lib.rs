//! Python bindings. Fuzzy states, scenarios, certificates and reports cross
//! the boundary as JSON strings in the same format as the command-line tool.

use fuzzy_lyapunov::experiments::run_named;
use fuzzy_lyapunov::fuzzy::FuzzyBox;
use fuzzy_lyapunov::ivp::solve;
use fuzzy_lyapunov::lyapunov::{check_theorem, Theorem};
use fuzzy_lyapunov::scenario::{Overrides, Scenario, ScenarioFile};
use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_box(text: &str) -> PyResult<FuzzyBox> {
    serde_json::from_str(text).map_err(value_err)
}

fn load(text: &str, levels: Option<usize>, horizon: Option<f64>, dt: Option<f64>, seed: Option<u64>) -> PyResult<Scenario> {
    let file = ScenarioFile::from_json(text).map_err(value_err)?;
    Scenario::from_file(&file, &Overrides { levels, horizon, dt, seed }).map_err(value_err)
}

/// Sup distance between two fuzzy boxes given as JSON.
#[pyfunction]
fn sup_metric(u: &str, v: &str) -> PyResult<f64> {
    parse_box(u)?.sup_metric(&parse_box(v)?).map_err(value_err)
}

/// H-difference `x ⊖ y` as JSON; raises ArithmeticError when it does not exist.
#[pyfunction]
fn h_difference(x: &str, y: &str) -> PyResult<String> {
    let z = parse_box(x)?.h_difference(&parse_box(y)?).map_err(|e| PyArithmeticError::new_err(e.to_string()))?;
    Ok(serde_json::to_string(&z).expect("fuzzy box serializes"))
}

/// Solves a scenario and returns the trajectory CSV.
#[pyfunction]
#[pyo3(signature = (scenario, levels=None, horizon=None, dt=None))]
fn simulate(scenario: &str, levels: Option<usize>, horizon: Option<f64>, dt: Option<f64>) -> PyResult<String> {
    let scn = load(scenario, levels, horizon, dt, None)?;
    let traj = solve(&scn.ivp).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(traj.to_csv())
}

/// Checks a theorem for a scenario and returns the certificate JSON.
#[pyfunction]
#[pyo3(signature = (scenario, theorem=None, levels=None, seed=None))]
fn certify(scenario: &str, theorem: Option<&str>, levels: Option<usize>, seed: Option<u64>) -> PyResult<String> {
    let scn = load(scenario, levels, None, None, seed)?;
    let which = match theorem {
        Some(t) => t.parse::<Theorem>().map_err(value_err)?,
        None => scn.theorem.ok_or_else(|| value_err("no theorem given"))?,
    };
    let spec = scn.spec().map_err(value_err)?;
    let cert = check_theorem(spec, scn.ivp.rhs(), which, &scn.plan).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(serde_json::to_string(&cert).expect("certificate serializes"))
}

/// Runs a built-in experiment and returns the report JSON.
#[pyfunction]
#[pyo3(signature = (name, horizon=None))]
fn report(py: Python<'_>, name: &str, horizon: Option<f64>) -> PyResult<String> {
    let ov = Overrides { horizon, ..Default::default() };
    let rep = py
        .detach(|| run_named(name, &ov))
        .ok_or_else(|| value_err(format!("unknown experiment {name:?}")))?;
    Ok(serde_json::to_string(&rep).expect("report serializes"))
}

#[pymodule]
fn fuzzy_lyapunov_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(sup_metric, m)?)?;
    m.add_function(wrap_pyfunction!(h_difference, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    Ok(())
}
