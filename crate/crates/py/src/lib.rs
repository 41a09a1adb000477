//! Python bindings.
//!
//! Errors surface as `gpsphen_py.DataError` or `gpsphen_py.ConfigError`,
//! mirroring the command-line exit codes 1 and 2. Stage summaries come back as
//! plain dicts.

use std::path::PathBuf;

use gpsphen::analysis::{morning_evening_contrast, pca_fit, PcaModel};
use gpsphen::geo::{haversine, Coordinate};
use gpsphen::pipeline::{self, RunConfig, FORMAT_VERSION};
use gpsphen::stats::WelchResult;
use gpsphen::synth::{write_study, StudySpec};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

create_exception!(gpsphen_py, DataError, PyException, "The input data cannot support the requested computation.");
create_exception!(gpsphen_py, ConfigError, PyException, "The run is misconfigured or an upstream artifact is missing.");

fn to_py(e: gpsphen::Error) -> PyErr {
    if e.is_config_error() {
        ConfigError::new_err(e.to_string())
    } else {
        DataError::new_err(e.to_string())
    }
}

fn to_dict<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| DataError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Great-circle distance in meters.
#[pyfunction]
fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    haversine(Coordinate::new(lat1, lon1), Coordinate::new(lat2, lon2))
}

/// Normalized entropy of per-place dwell times.
#[pyfunction]
fn place_entropy(dwell_s: Vec<f64>) -> f64 {
    gpsphen::phenotypes::place_entropy(&dwell_s)
}

/// Intradaily variability of a single day's activity series.
#[pyfunction]
fn intradaily_variability(day: Vec<f64>) -> PyResult<f64> {
    gpsphen::circadian::intradaily_variability_day(&day).map_err(to_py)
}

/// Pairwise AUC; None when the labels have a single class.
#[pyfunction]
fn auc(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<Option<f64>> {
    if scores.len() != labels.len() {
        return Err(DataError::new_err("scores and labels differ in length"));
    }
    Ok(gpsphen::predict::auc(&scores, &labels))
}

#[pyclass(frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct WelchTest {
    mean_a: f64,
    mean_b: f64,
    t_statistic: f64,
    degrees_freedom: f64,
    p_value: f64,
    n_a: usize,
    n_b: usize,
}

impl From<WelchResult> for WelchTest {
    fn from(w: WelchResult) -> Self {
        WelchTest {
            mean_a: w.mean_a,
            mean_b: w.mean_b,
            t_statistic: w.t_statistic,
            degrees_freedom: w.degrees_freedom,
            p_value: w.p_value,
            n_a: w.n_a,
            n_b: w.n_b,
        }
    }
}

#[pymethods]
impl WelchTest {
    fn __repr__(&self) -> String {
        format!("WelchTest(t={:.4}, df={:.2}, p={:.4})", self.t_statistic, self.degrees_freedom, self.p_value)
    }
}

/// Welch's two-sided t-test; `t` is positive when `a` has the larger mean.
#[pyfunction]
fn welch_t(a: Vec<f64>, b: Vec<f64>) -> PyResult<WelchTest> {
    gpsphen::stats::welch_t(&a, &b).map(Into::into).map_err(to_py)
}

/// A fitted principal component model.
#[pyclass(frozen)]
struct Pca {
    model: PcaModel,
}

#[pymethods]
impl Pca {
    #[new]
    #[pyo3(signature = (data, n_components = 10, correlation = false))]
    fn new(data: Vec<Vec<f64>>, n_components: usize, correlation: bool) -> PyResult<Self> {
        pca_fit(&data, n_components, correlation).map(|model| Pca { model }).map_err(to_py)
    }

    #[getter]
    fn loadings(&self) -> Vec<Vec<f64>> {
        self.model.loadings.clone()
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.model.eigenvalues.clone()
    }

    #[getter]
    fn explained_variance_ratio(&self) -> Vec<f64> {
        self.model.explained_variance_ratio.clone()
    }

    #[getter]
    fn scores(&self) -> Vec<Vec<f64>> {
        self.model.scores.clone()
    }

    fn transform(&self, row: Vec<f64>) -> PyResult<Vec<f64>> {
        if row.len() != self.model.n_features {
            return Err(DataError::new_err(format!("expected {} values, got {}", self.model.n_features, row.len())));
        }
        Ok(self.model.transform(&row))
    }

    fn reconstruct(&self, scores: Vec<f64>) -> Vec<f64> {
        self.model.reconstruct(&scores)
    }

    /// Morning/evening minus midday loading contrast per component (47-value profiles only).
    fn morning_evening_contrast(&self) -> PyResult<Vec<f64>> {
        if self.model.n_features != 47 {
            return Err(DataError::new_err("contrast needs 47-value displacement loadings"));
        }
        Ok(self.model.loadings.iter().map(|l| morning_evening_contrast(l)).collect())
    }
}

/// Stage-by-stage access to the file-based pipeline.
#[pyclass(frozen)]
struct Pipeline {
    config: RunConfig,
}

#[pymethods]
impl Pipeline {
    #[new]
    #[pyo3(signature = (output_dir, trace_dir = None, roster = None, survey = None, skip_forest = false))]
    fn new(
        output_dir: PathBuf,
        trace_dir: Option<PathBuf>,
        roster: Option<PathBuf>,
        survey: Option<PathBuf>,
        skip_forest: bool,
    ) -> PyResult<Self> {
        let config = RunConfig {
            output_dir,
            trace_dir,
            roster,
            survey,
            skip_forest,
            ..Default::default()
        };
        config.validate().map_err(to_py)?;
        Ok(Pipeline { config })
    }

    /// Builds a pipeline from the same JSON accepted by `gpsphen --config`.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let config = RunConfig::from_json(text).map_err(to_py)?;
        config.validate().map_err(to_py)?;
        Ok(Pipeline { config })
    }

    fn ingest(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let s = py.detach(|| pipeline::run_ingest(&self.config)).map_err(to_py)?;
        to_dict(py, &s)
    }

    fn ddp(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let s = py.detach(|| pipeline::run_ddp(&self.config)).map_err(to_py)?;
        to_dict(py, &s)
    }

    fn pca(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let s = py.detach(|| pipeline::run_pca(&self.config)).map_err(to_py)?;
        to_dict(py, &s)
    }

    fn circadian(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let s = py.detach(|| pipeline::run_circadian(&self.config)).map_err(to_py)?;
        to_dict(py, &s)
    }

    fn phenotypes(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let s = py.detach(|| pipeline::run_phenotypes(&self.config)).map_err(to_py)?;
        to_dict(py, &s)
    }

    /// One dict per Welch comparison.
    fn compare(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let rows = py.detach(|| pipeline::run_compare(&self.config)).map_err(to_py)?;
        to_dict(py, &rows)
    }

    fn predict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let s = py.detach(|| pipeline::run_predict(&self.config)).map_err(to_py)?;
        to_dict(py, &s)
    }

    /// Every stage; prediction only runs when a survey is configured.
    fn run(&self, py: Python<'_>) -> PyResult<()> {
        py.detach(|| pipeline::run_pipeline(&self.config)).map_err(to_py)
    }
}

/// Writes a two-arm synthetic study (or the study described by `spec_json`)
/// into `out_dir` and returns the participant and day counts.
#[pyfunction]
#[pyo3(signature = (out_dir, participants = 50, days = 60, seed = 1, spec_json = None))]
fn synth_study(
    py: Python<'_>,
    out_dir: PathBuf,
    participants: usize,
    days: usize,
    seed: u64,
    spec_json: Option<&str>,
) -> PyResult<(usize, usize)> {
    let spec = match spec_json {
        Some(text) => StudySpec::from_json(text).map_err(to_py)?,
        None => StudySpec::two_arm(participants, days, seed),
    };
    py.detach(|| {
        let cohort = spec.generate()?;
        std::fs::create_dir_all(&out_dir)?;
        write_study(&out_dir, &spec, &cohort)?;
        Ok((cohort.len(), cohort.iter().map(|p| p.days.len()).sum()))
    })
    .map_err(to_py)
}

#[pymodule]
fn gpsphen_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("FORMAT_VERSION", FORMAT_VERSION)?;
    m.add("DataError", m.py().get_type::<DataError>())?;
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add_class::<WelchTest>()?;
    m.add_class::<Pca>()?;
    m.add_class::<Pipeline>()?;
    m.add_function(wrap_pyfunction!(haversine_m, m)?)?;
    m.add_function(wrap_pyfunction!(place_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(intradaily_variability, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(welch_t, m)?)?;
    m.add_function(wrap_pyfunction!(synth_study, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welch_fields_carry_over() {
        let w = gpsphen::stats::welch_t(&[10.0, 12.0, 14.0, 16.0], &[11.0, 13.0, 15.0, 17.0]).unwrap();
        let t = WelchTest::from(w);
        assert_eq!((t.n_a, t.n_b), (4, 4));
        assert_eq!(t.t_statistic, w.t_statistic);
        assert!(t.__repr__().starts_with("WelchTest(t=-0.5477"));
    }
}
