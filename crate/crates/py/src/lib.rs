//! Python bindings: experiment configs and runs, the attack statistics,
//! ROC evaluation and the closed-form TPR.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use bmia_core::attacks::{self, AttackDecision};
use bmia_core::eval::{self, AttackReport};
use bmia_core::pipeline;
use bmia_core::theory::{self, GaussianPair};
use bmia_core::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

#[pyclass(name = "ExperimentConfig", from_py_object)]
#[derive(Clone)]
struct PyExperimentConfig {
    inner: pipeline::ExperimentConfig,
}

#[pymethods]
impl PyExperimentConfig {
    /// Desk-scale defaults with every seed derived from `seed`.
    #[staticmethod]
    #[pyo3(signature = (seed = 0))]
    fn desk_scale(seed: u64) -> Self {
        PyExperimentConfig {
            inner: pipeline::ExperimentConfig::desk_scale(seed),
        }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let inner = pipeline::ExperimentConfig::from_toml(text).map_err(to_py)?;
        Ok(PyExperimentConfig { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = pipeline::ExperimentConfig::load(path).map_err(to_py)?;
        Ok(PyExperimentConfig { inner })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    fn override_seeds(&mut self, seed: u64) {
        self.inner.override_seeds(seed);
    }

    fn __repr__(&self) -> String {
        format!("ExperimentConfig(<{} bytes of toml>)", self.inner.to_toml().len())
    }
}

#[pyclass(name = "AttackReport", get_all, skip_from_py_object)]
struct PyAttackReport {
    attack_name: String,
    tpr_at: Vec<(f64, f64)>,
    auc: f64,
    n_members: usize,
    n_nonmembers: usize,
    train_seconds: f64,
    attack_seconds: f64,
    roc: Vec<(f64, f64)>,
}

impl From<AttackReport> for PyAttackReport {
    fn from(r: AttackReport) -> Self {
        PyAttackReport {
            attack_name: r.attack_name,
            tpr_at: r.tpr_at,
            auc: r.auc,
            n_members: r.n_members,
            n_nonmembers: r.n_nonmembers,
            train_seconds: r.train_seconds,
            attack_seconds: r.attack_seconds,
            roc: r.roc.points,
        }
    }
}

#[pymethods]
impl PyAttackReport {
    fn __repr__(&self) -> String {
        format!("AttackReport({}, auc={:.4})", self.attack_name, self.auc)
    }
}

#[pyclass(name = "AttackDecision", get_all, skip_from_py_object)]
struct PyAttackDecision {
    attack_name: String,
    statistic: f64,
    p_value: Option<f64>,
    verdict_at: Vec<(f64, bool)>,
    notes: Vec<String>,
}

impl From<AttackDecision> for PyAttackDecision {
    fn from(d: AttackDecision) -> Self {
        PyAttackDecision {
            attack_name: d.attack_name,
            statistic: d.statistic,
            p_value: d.p_value,
            verdict_at: d.verdict_at,
            notes: d.notes,
        }
    }
}

#[pymethods]
impl PyAttackDecision {
    fn __repr__(&self) -> String {
        format!("AttackDecision({}, statistic={})", self.attack_name, self.statistic)
    }
}

/// Runs every stage and returns one report per attack.
#[pyfunction]
fn run_experiment(py: Python<'_>, config: &PyExperimentConfig, out: PathBuf) -> PyResult<Vec<PyAttackReport>> {
    let cfg = config.inner.clone();
    let reports = py
        .detach(move || pipeline::run_experiment(&cfg, &out))
        .map_err(to_py)?;
    Ok(reports.into_iter().map(Into::into).collect())
}

/// Toy regression demo; returns the summary numbers and the files written.
#[pyfunction]
#[pyo3(signature = (out, config_toml = None))]
fn run_toy_regression_demo(
    py: Python<'_>,
    out: PathBuf,
    config_toml: Option<&str>,
) -> PyResult<(f64, f64, f64, Vec<PathBuf>)> {
    let cfg = match config_toml {
        Some(t) => pipeline::DemoConfig::from_toml(t).map_err(to_py)?,
        None => pipeline::DemoConfig::default(),
    };
    let (r, files) = py
        .detach(move || pipeline::run_toy_regression_demo(&cfg, &out))
        .map_err(to_py)?;
    Ok((r.prior_precision, r.bnn_coverage, r.qr_coverage, files))
}

/// `(name, passed, detail)` for each theory self-check.
#[pyfunction]
#[pyo3(signature = (seed = 0))]
fn verify_theory(py: Python<'_>, seed: u64) -> PyResult<Vec<(String, bool, String)>> {
    let rows = py.detach(move || pipeline::verify_theory(seed)).map_err(to_py)?;
    Ok(rows.into_iter().map(|r| (r.name, r.passed, r.detail)).collect())
}

#[pyfunction]
fn bmia_from_scores(s0: f64, ref_scores: Vec<f64>, alphas: Vec<f64>) -> PyResult<PyAttackDecision> {
    attacks::bmia_from_scores(s0, &ref_scores, &alphas).map(Into::into).map_err(to_py)
}

#[pyfunction]
fn attack_p(population_scores: Vec<f64>, s0: f64, alphas: Vec<f64>) -> PyResult<PyAttackDecision> {
    attacks::attack_p(&population_scores, s0, &alphas).map(Into::into).map_err(to_py)
}

#[pyfunction]
fn attack_r(ref_scores: Vec<f64>, s0: f64, alphas: Vec<f64>) -> PyResult<PyAttackDecision> {
    attacks::attack_r(&ref_scores, s0, &alphas).map(Into::into).map_err(to_py)
}

#[pyfunction]
fn lira_offline(ref_scores: Vec<f64>, s0: f64, alphas: Vec<f64>) -> PyResult<PyAttackDecision> {
    attacks::lira_offline(&ref_scores, s0, &alphas).map(Into::into).map_err(to_py)
}

/// ROC points `(fpr, tpr)`, starting at `(0, 0)`.
#[pyfunction]
fn roc_curve(statistics: Vec<f64>, is_member: Vec<bool>) -> PyResult<Vec<(f64, f64)>> {
    Ok(eval::roc_curve(&statistics, &is_member).map_err(to_py)?.points)
}

#[pyfunction]
fn tpr_at_fpr(statistics: Vec<f64>, is_member: Vec<bool>, alpha: f64) -> PyResult<f64> {
    Ok(eval::roc_curve(&statistics, &is_member).map_err(to_py)?.tpr_at_fpr(alpha))
}

#[pyfunction]
fn auc(statistics: Vec<f64>, is_member: Vec<bool>) -> PyResult<f64> {
    Ok(eval::roc_curve(&statistics, &is_member).map_err(to_py)?.auc())
}

/// TPR at FPR `alpha` of the threshold attack on Gaussian member
/// `(mu_s, sigma_s)` and non-member `(mu_d, sigma_d)` scores.
#[pyfunction]
fn tpr_marginal_closed_form(mu_s: f64, sigma_s: f64, mu_d: f64, sigma_d: f64, alpha: f64) -> PyResult<f64> {
    let pair = GaussianPair::new(mu_s, sigma_s, mu_d, sigma_d).map_err(to_py)?;
    theory::tpr_marginal_closed_form(&pair, alpha).map_err(to_py)
}

#[pymodule]
fn bmia(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyExperimentConfig>()?;
    m.add_class::<PyAttackReport>()?;
    m.add_class::<PyAttackDecision>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_toy_regression_demo, m)?)?;
    m.add_function(wrap_pyfunction!(verify_theory, m)?)?;
    m.add_function(wrap_pyfunction!(bmia_from_scores, m)?)?;
    m.add_function(wrap_pyfunction!(attack_p, m)?)?;
    m.add_function(wrap_pyfunction!(attack_r, m)?)?;
    m.add_function(wrap_pyfunction!(lira_offline, m)?)?;
    m.add_function(wrap_pyfunction!(roc_curve, m)?)?;
    m.add_function(wrap_pyfunction!(tpr_at_fpr, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(tpr_marginal_closed_form, m)?)?;
    Ok(())
}
