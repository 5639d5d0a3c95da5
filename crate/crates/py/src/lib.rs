//! Python bindings. Structured results come back as plain dicts and lists
//! (via JSON), models as small wrapper classes that round-trip through JSON.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::Serialize;

use wireoff_core::availability::{des_forecast, des_search};
use wireoff_core::baseline::{fit_seasonal as core_fit_seasonal, BaselineModel, SeasonalSpec};
use wireoff_core::behavior::{estimate, BehaviorDistributions, EstimateOptions, Interattempt};
use wireoff_core::data as io;
use wireoff_core::decision::{recommend as core_recommend, Recommendation};
use wireoff_core::pipeline::{self, PipelineConfig, PipelineInputs, WiredOffSource};
use wireoff_core::series::{AvailabilitySeries, MinuteSeries, TimeIndex, VolumeSeries};
use wireoff_core::wiredoff::{adf_test, estimate_slope};
use wireoff_core::wiredon::{simulate_wiredon as core_simulate, FnAvailability, SimulationConfig};
use wireoff_core::Error;

fn err(e: Error) -> PyErr {
    if e.is_input_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_json<T: for<'de> serde::Deserialize<'de>>(text: &str) -> PyResult<T> {
    serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_json<T: Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Series whose last value sits at offset 0.
fn ending_now(values: Vec<f64>) -> PyResult<MinuteSeries> {
    MinuteSeries::ending_now(TimeIndex::new(0), values).map_err(err)
}

/// Fitted per-vendor baseline volume model.
#[pyclass(name = "BaselineModel", module = "wireoff", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyBaselineModel(BaselineModel);

#[pymethods]
impl PyBaselineModel {
    /// Expected volume `m` minutes after the end of the fitted history.
    fn predict(&self, m: i64) -> PyResult<f64> {
        self.0.predict(m, None).map_err(err)
    }

    /// Point forecast and 10/90 bands over `1..=horizon`.
    fn forecast(&self, py: Python<'_>, horizon: usize, seed: u64) -> PyResult<Py<PyAny>> {
        to_py(py, &pipeline::forecast_baseline(&self.0, horizon, seed).map_err(err)?)
    }

    #[getter]
    fn beta(&self) -> Vec<f64> {
        self.0.beta.clone()
    }

    #[getter]
    fn delta(&self) -> Vec<f64> {
        self.0.delta().to_vec()
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.0)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        from_json(text).map(Self)
    }
}

/// Tunes and fits a baseline model on minutely volumes ending now.
#[pyfunction]
#[pyo3(signature = (volumes, vendor_id="vendor", trials=20, seed=0, period=10080, changepoints=25, holdout=1440))]
fn fit_baseline(
    volumes: Vec<f64>,
    vendor_id: &str,
    trials: usize,
    seed: u64,
    period: i64,
    changepoints: usize,
    holdout: usize,
) -> PyResult<PyBaselineModel> {
    let history = VolumeSeries::new(vendor_id, ending_now(volumes)?).map_err(err)?;
    let config = PipelineConfig {
        seed,
        baseline_trials: trials,
        period,
        changepoints,
        holdout_minutes: holdout,
        ..PipelineConfig::default()
    };
    Ok(PyBaselineModel(pipeline::fit_baseline(&history, &config).map_err(err)?.model))
}

/// MAP Fourier coefficients of log volumes ending now (seasonality only).
#[pyfunction]
#[pyo3(signature = (log_values, harmonics, prior_scale, period=10080, noise_scale=1.0))]
fn fit_seasonal(
    log_values: Vec<f64>,
    harmonics: usize,
    prior_scale: f64,
    period: i64,
    noise_scale: f64,
) -> PyResult<Vec<f64>> {
    let spec = SeasonalSpec { harmonics, period, prior_scale, noise_scale };
    core_fit_seasonal(&ending_now(log_values)?, &spec).map_err(err)
}

/// Double exponential smoothing model of availability.
#[pyclass(name = "DesModel", module = "wireoff", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDesModel(wireoff_core::availability::DesModel);

#[pymethods]
impl PyDesModel {
    #[getter]
    fn alpha(&self) -> f64 {
        self.0.alpha
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.0.eta
    }

    #[getter]
    fn level(&self) -> f64 {
        self.0.level
    }

    #[getter]
    fn trend(&self) -> f64 {
        self.0.trend
    }

    #[getter]
    fn fit_rmse(&self) -> f64 {
        self.0.fit_rmse
    }

    /// Availability `m` minutes ahead, clamped to `[0, 1]`.
    fn forecast(&self, m: i64) -> f64 {
        des_forecast(&self.0, m)
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.0)
    }
}

#[pyfunction]
#[pyo3(signature = (availability, trials=256, seed=0))]
fn fit_des(availability: Vec<f64>, trials: usize, seed: u64) -> PyResult<PyDesModel> {
    let obs = AvailabilitySeries::new("vendor", ending_now(availability)?).map_err(err)?;
    Ok(PyDesModel(des_search(&obs, trials, seed).map_err(err)?.0))
}

/// Retry, switch and interattempt distributions.
#[pyclass(name = "BehaviorDistributions", module = "wireoff", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyBehavior(BehaviorDistributions);

#[pymethods]
impl PyBehavior {
    /// Explicit distributions; `interattempt` maps delay seconds to mass.
    #[new]
    fn new(retry: Vec<f64>, switch: Vec<f64>, interattempt: Vec<(u32, f64)>) -> PyResult<Self> {
        let tau = Interattempt::from_pmf(interattempt).map_err(err)?;
        Ok(Self(BehaviorDistributions::new(&retry, &switch, tau).map_err(err)?))
    }

    fn retry(&self, k: u32) -> f64 {
        self.0.retry(k)
    }

    fn switch(&self, k: u32) -> f64 {
        self.0.switch(k)
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.0)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        from_json(text).map(Self)
    }
}

/// Estimates behavior from an events CSV document.
#[pyfunction]
#[pyo3(signature = (events_csv, vendor, smoothing=true, session_gap_seconds=1800))]
fn estimate_behavior(events_csv: &str, vendor: &str, smoothing: bool, session_gap_seconds: i64) -> PyResult<PyBehavior> {
    let events = io::parse_events(events_csv).map_err(err)?;
    let options = EstimateOptions { smoothing, session_gap_seconds: Some(session_gap_seconds), window: None };
    Ok(PyBehavior(estimate(&events, vendor, &options).map_err(err)?))
}

/// Wired-on Monte Carlo forecast.
///
/// `problematic_volume` and `availability` are indexed from `warmup_start`
/// through `horizon`; `other_volume` covers minutes `1..=horizon`.
#[pyfunction]
#[pyo3(signature = (problematic_volume, other_volume, availability, behavior, horizon, replications, seed, warmup_start=-10))]
#[allow(clippy::too_many_arguments)]
fn simulate_wiredon(
    py: Python<'_>,
    problematic_volume: Vec<f64>,
    other_volume: Vec<f64>,
    availability: Vec<f64>,
    behavior: &PyBehavior,
    horizon: usize,
    replications: usize,
    seed: u64,
    warmup_start: i64,
) -> PyResult<Py<PyAny>> {
    let span = (horizon as i64 - warmup_start + 1) as usize;
    if problematic_volume.len() != span || availability.len() != span {
        return Err(PyValueError::new_err(format!(
            "problematic_volume and availability need {span} values (minutes {warmup_start}..={horizon})"
        )));
    }
    let problematic = MinuteSeries::new(TimeIndex::new(0), warmup_start, problematic_volume).map_err(err)?;
    let other = MinuteSeries::new(TimeIndex::new(0), 1, other_volume).map_err(err)?;
    let last = *availability.last().unwrap_or(&0.0);
    let avail = FnAvailability(move |m: i64| {
        let i = m - warmup_start;
        if i < 0 {
            availability[0]
        } else {
            availability.get(i as usize).copied().unwrap_or(last)
        }
    });
    let config = SimulationConfig { warmup_start, ..SimulationConfig::new(horizon, replications, seed) };
    let forecast = py
        .detach(|| core_simulate(&problematic, &other, &avail, &behavior.0, &config))
        .map_err(err)?;
    to_py(py, &forecast)
}

/// Through-origin least-squares migration slope.
#[pyfunction]
fn wiredoff_slope(w_off: Vec<f64>, c_hat_n0: Vec<f64>, c_hat_other: Vec<f64>) -> PyResult<f64> {
    let window = (0..w_off.len() as i64).collect();
    Ok(estimate_slope(&w_off, &c_hat_n0, &c_hat_other, window).map_err(err)?.delta)
}

/// Augmented Dickey-Fuller test with constant and AIC lag selection.
#[pyfunction]
fn adf(py: Python<'_>, series: Vec<f64>) -> PyResult<Py<PyAny>> {
    to_py(py, &adf_test(&series).map_err(err)?)
}

/// Residual diagnostics of a one-regressor fit.
#[pyfunction]
#[pyo3(signature = (y, x, fitted, intercept=false, max_lag=20))]
fn diagnostics(py: Python<'_>, y: Vec<f64>, x: Vec<f64>, fitted: Vec<f64>, intercept: bool, max_lag: usize) -> PyResult<Py<PyAny>> {
    to_py(py, &wireoff_core::diagnostics::diagnose(&y, &x, &fitted, intercept, max_lag).map_err(err)?)
}

/// The decision rule on two curves over `1..=R`.
#[pyfunction]
#[pyo3(signature = (wired_on, wired_off, anchor_epoch_minute=0))]
fn recommend(py: Python<'_>, wired_on: Vec<f64>, wired_off: Vec<f64>, anchor_epoch_minute: i64) -> PyResult<Py<PyAny>> {
    let rec: Recommendation = core_recommend(&wired_on, &wired_off, TimeIndex::new(anchor_epoch_minute)).map_err(err)?;
    let obj = to_py(py, &rec)?;
    obj.bind(py).set_item("summary", rec.summary())?;
    Ok(obj)
}

/// Runs the whole pipeline on CSV files and returns the recommendation.
#[pyfunction]
#[pyo3(signature = (volumes, availability, events, wiredoff_history, seed=0, horizon=60, replications=20, vendor=None))]
#[allow(clippy::too_many_arguments)]
fn run_pipeline(
    py: Python<'_>,
    volumes: PathBuf,
    availability: PathBuf,
    events: PathBuf,
    wiredoff_history: PathBuf,
    seed: u64,
    horizon: usize,
    replications: usize,
    vendor: Option<String>,
) -> PyResult<Py<PyAny>> {
    let run = py
        .detach(|| {
            let avail = io::load_availability(&availability, io::MAX_AVAILABILITY_GAP)?;
            let inputs = PipelineInputs {
                volumes: io::load_volumes(&volumes)?,
                availability: PipelineInputs::availability_from(avail, vendor.as_deref())?,
                events: io::load_events(&events)?,
                wiredoff: Some(WiredOffSource::History(io::load_wiredoff_history(&wiredoff_history)?)),
                now_epoch_minute: None,
            };
            let config = PipelineConfig { seed, horizon, replications, ..PipelineConfig::default() };
            pipeline::run(&inputs, &config)
        })
        .map_err(err)?;
    let obj = to_py(py, &run.recommendation)?;
    obj.bind(py).set_item("summary", run.recommendation.summary())?;
    Ok(obj)
}

#[pymodule]
fn wireoff(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBaselineModel>()?;
    m.add_class::<PyDesModel>()?;
    m.add_class::<PyBehavior>()?;
    m.add_function(wrap_pyfunction!(fit_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(fit_seasonal, m)?)?;
    m.add_function(wrap_pyfunction!(fit_des, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_behavior, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_wiredon, m)?)?;
    m.add_function(wrap_pyfunction!(wiredoff_slope, m)?)?;
    m.add_function(wrap_pyfunction!(adf, m)?)?;
    m.add_function(wrap_pyfunction!(diagnostics, m)?)?;
    m.add_function(wrap_pyfunction!(recommend, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
