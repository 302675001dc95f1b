//! Python access to the run harness and the coefficient formulas.
//! Configurations travel as TOML text, reports as JSON text.

use lorentz_avg::connections::lorentz_gamma as lorentz_coefficients;
use lorentz_avg::dynamics::{integrate_lorentz, IntegrationOptions};
use lorentz_avg::fields::{preset_field, FieldParams};
use lorentz_avg::geometry::Minkowski;
use lorentz_avg::harness::{self, check, to_json_bytes, Config};
use lorentz_avg::{Tensor3, Vector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn py_err(e: lorentz_avg::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn config(text: &str) -> PyResult<Config> {
    Config::from_toml_str(text).map_err(py_err)
}

/// `[i][j][k]` nesting of a coefficient tensor.
pub fn nested(t: &Tensor3) -> Vec<Vec<Vec<f64>>> {
    let n = t.dim();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| t[(i, j, k)]).collect()).collect())
        .collect()
}

/// Runs the comparison and returns the JSON report.
#[pyfunction]
#[pyo3(signature = (config_toml = ""))]
fn compare(config_toml: &str) -> PyResult<String> {
    let report = harness::run_comparison(&config(config_toml)?).map_err(py_err)?;
    let bytes = to_json_bytes(&report).map_err(py_err)?;
    Ok(String::from_utf8(bytes).expect("serde_json emits UTF-8"))
}

/// `(tau, t, x, y)`
type Sample = (f64, f64, Vec<f64>, Vec<f64>);

/// Central trajectory as `(tau, t, x, y)` tuples on the lab-time grid.
#[pyfunction]
#[pyo3(signature = (config_toml = ""))]
fn simulate(config_toml: &str) -> PyResult<Vec<Sample>> {
    let cfg = config(config_toml)?;
    cfg.validate().map_err(py_err)?;
    let metric = cfg.metric_field().map_err(py_err)?;
    let field = cfg.field_preset().map_err(py_err)?;
    let opts = IntegrationOptions {
        tol: cfg.run.tol,
        n_out: cfg.run.n_out,
        ..Default::default()
    };
    let x0 = Vector::zeros(cfg.dimension);
    let v0 = cfg.center_velocity().map_err(py_err)?;
    let traj = integrate_lorentz(&metric, &field, &x0, &v0, cfg.run.t, &opts).map_err(py_err)?;
    Ok(traj
        .samples
        .iter()
        .map(|s| (s.tau, s.t, s.x.iter().copied().collect(), s.y.iter().copied().collect()))
        .collect())
}

/// `(name, pass, value, tolerance)` for every invariant check.
#[pyfunction]
#[pyo3(signature = (seed = 0))]
fn run_checks(seed: u64) -> PyResult<Vec<(String, bool, f64, f64)>> {
    Ok(check::run_checks(seed)
        .map_err(py_err)?
        .into_iter()
        .map(|c| (c.name, c.pass, c.value, c.tolerance))
        .collect())
}

/// Lorentz connection coefficients of a preset field in Minkowski space.
#[pyfunction]
#[pyo3(signature = (field, x, y, e0 = None, b0 = None, gradient = None))]
fn lorentz_gamma(
    field: &str,
    x: Vec<f64>,
    y: Vec<f64>,
    e0: Option<f64>,
    b0: Option<f64>,
    gradient: Option<f64>,
) -> PyResult<Vec<Vec<Vec<f64>>>> {
    let n = x.len();
    let params = FieldParams {
        e0,
        b0,
        gradient,
        axis: None,
    };
    let f = preset_field(field, &params, n).map_err(py_err)?;
    let metric = Minkowski::new(n).map_err(py_err)?;
    let g = lorentz_coefficients(&metric, &f, &Vector::from_vec(x), &Vector::from_vec(y)).map_err(py_err)?;
    Ok(nested(g.tensor()))
}

#[pyfunction]
#[pyo3(signature = (alpha, energy, t, norm_f, c = 2.0, c2 = 1.0, b2 = 1.0))]
fn position_bound(alpha: f64, energy: f64, t: f64, norm_f: f64, c: f64, c2: f64, b2: f64) -> PyResult<f64> {
    harness::position_bound(alpha, energy, t, norm_f, c, c2, b2).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (alpha, energy, t, norm_f, k = 1.0, k2 = 1.0, d2 = 1.0))]
fn velocity_bound(alpha: f64, energy: f64, t: f64, norm_f: f64, k: f64, k2: f64, d2: f64) -> PyResult<f64> {
    harness::velocity_bound(alpha, energy, t, norm_f, k, k2, d2).map_err(py_err)
}

#[pymodule]
fn lorentz_avg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_checks, m)?)?;
    m.add_function(wrap_pyfunction!(lorentz_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(position_bound, m)?)?;
    m.add_function(wrap_pyfunction!(velocity_bound, m)?)?;
    Ok(())
}
