//! Python bindings for the `advocc` crate.
//!
//! Images cross the boundary as flat `float` sequences in NCHW order; the
//! per-item shape always comes from the model's architecture.

// pyo3 0.22 argument conversion trips this lint on every PyResult function.
#![allow(clippy::useless_conversion)]

use std::path::PathBuf;

use advocc::eval::{self, ScoreRecord};
use advocc::experiment::{self, ExperimentConfig};
use advocc::model::{checkpoint, ModelRole};
use advocc::trainer;
use advocc::{Error, Label, ModelState, Tensor};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

create_exception!(advocc_py, AdvoccError, PyException);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Argument(_) | Error::Config(_) | Error::Parse { .. } => {
            PyValueError::new_err(e.to_string())
        }
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => AdvoccError::new_err(e.to_string()),
    }
}

/// Serializes through JSON so Python receives plain dicts and lists.
fn to_object<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let text = serde_json::to_string(value).map_err(|e| AdvoccError::new_err(e.to_string()))?;
    Ok(py
        .import_bound("json")?
        .call_method1("loads", (text,))?
        .unbind())
}

fn records(scores: &[f64], outliers: &[bool]) -> PyResult<Vec<ScoreRecord>> {
    if scores.len() != outliers.len() {
        return Err(PyValueError::new_err(format!(
            "{} scores but {} labels",
            scores.len(),
            outliers.len()
        )));
    }
    Ok(scores
        .iter()
        .zip(outliers)
        .enumerate()
        .map(|(k, (&s, &o))| {
            let label = if o { Label::Outlier } else { Label::Inlier };
            ScoreRecord::new(k.to_string(), s, label)
        })
        .collect())
}

fn images_for(model: &ModelState, data: Vec<f64>) -> PyResult<Tensor> {
    let [c, h, w] = model.arch.input.dims();
    let item = c * h * w;
    if data.is_empty() || !data.len().is_multiple_of(item) {
        return Err(PyValueError::new_err(format!(
            "expected a multiple of {item} values ({c}x{h}x{w} per image), got {}",
            data.len()
        )));
    }
    Tensor::from_vec([data.len() / item, c, h, w], data).map_err(to_py)
}

#[pyclass(name = "Config", module = "advocc_py")]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    /// Parses a JSON document; an empty string gives the defaults.
    #[new]
    #[pyo3(signature = (json = ""))]
    fn new(json: &str) -> PyResult<Self> {
        Ok(PyConfig {
            inner: ExperimentConfig::from_json_str(json).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyConfig {
            inner: experiment::parse_config(&path).map_err(to_py)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json_string().map_err(to_py)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn data_root(&self) -> PathBuf {
        self.inner.data_root()
    }

    #[setter]
    fn set_data_root(&mut self, root: Option<PathBuf>) {
        self.inner.data_root = root;
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(protocol={:?}, seed={})",
            self.inner.protocol, self.inner.seed
        )
    }
}

#[pyclass(name = "Model", module = "advocc_py")]
#[derive(Clone)]
struct PyModel {
    inner: ModelState,
}

#[pymethods]
impl PyModel {
    /// Freshly initialized generator or discriminator for the config's
    /// architecture.
    #[staticmethod]
    #[pyo3(signature = (config, role, seed = 0))]
    fn init(config: &PyConfig, role: &str, seed: u64) -> PyResult<Self> {
        let role = match role {
            "generator" => ModelRole::Generator,
            "discriminator" => ModelRole::Discriminator,
            other => return Err(PyValueError::new_err(format!("unknown role {other:?}"))),
        };
        let arch = config.inner.architecture().map_err(to_py)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inner = ModelState::init(role_name(role), role, arch, &mut rng).map_err(to_py)?;
        Ok(PyModel { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel {
            inner: checkpoint::load(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        checkpoint::save(&self.inner, &path).map_err(to_py)
    }

    fn content_hash(&self) -> String {
        self.inner.content_hash()
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn role(&self) -> &'static str {
        role_name(self.inner.role)
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.inner.num_parameters()
    }

    /// `(channels, height, width)` of one input image.
    #[getter]
    fn input_shape(&self) -> (usize, usize, usize) {
        let [c, h, w] = self.inner.arch.input.dims();
        (c, h, w)
    }

    /// `(phase, epoch, iteration)` the state was captured at.
    #[getter]
    fn provenance(&self) -> (u8, usize, usize) {
        let p = self.inner.provenance;
        let phase = if p.phase == advocc::Phase::One { 1 } else { 2 };
        (phase, p.epoch, p.iteration)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(name={:?}, role={}, parameters={})",
            self.inner.name,
            role_name(self.inner.role),
            self.inner.num_parameters()
        )
    }
}

fn role_name(role: ModelRole) -> &'static str {
    match role {
        ModelRole::Generator => "generator",
        ModelRole::Discriminator => "discriminator",
    }
}

/// ROC AUC with outliers as the positive class.
#[pyfunction]
fn compute_auc(scores: Vec<f64>, outliers: Vec<bool>) -> PyResult<f64> {
    eval::compute_auc(&records(&scores, &outliers)?).map_err(to_py)
}

/// `(eer, threshold)`.
#[pyfunction]
fn compute_eer(scores: Vec<f64>, outliers: Vec<bool>) -> PyResult<(f64, f64)> {
    eval::compute_eer(&records(&scores, &outliers)?).map_err(to_py)
}

/// `(f1, threshold)` at the best threshold.
#[pyfunction]
fn compute_f1_best(scores: Vec<f64>, outliers: Vec<bool>) -> PyResult<(f64, f64)> {
    eval::compute_f1_best(&records(&scores, &outliers)?).map_err(to_py)
}

/// Per-image anomaly scores, `D(G(x))`.
#[pyfunction]
fn anomaly_scores(
    py: Python<'_>,
    generator: &PyModel,
    discriminator: &PyModel,
    images: Vec<f64>,
) -> PyResult<Vec<f64>> {
    let x = images_for(&generator.inner, images)?;
    py.allow_threads(|| eval::anomaly_scores(&generator.inner, &discriminator.inner, &x))
        .map_err(to_py)
}

/// Pixel-wise mean of `G_old` reconstructions for each index pair, flattened.
#[pyfunction]
fn make_pseudo_anomaly(
    g_old: &PyModel,
    images: Vec<f64>,
    pairs: Vec<(usize, usize)>,
) -> PyResult<Vec<f64>> {
    let x = images_for(&g_old.inner, images)?;
    let mix = trainer::make_pseudo_anomaly(&g_old.inner, &x, &pairs).map_err(to_py)?;
    Ok(mix.images.into_vec())
}

/// Phase-two discriminator loss from raw discriminator outputs per stream.
#[pyfunction]
#[pyo3(signature = (real, recon, low, pseudo, alpha = 0.1, beta = 0.001))]
fn phase_two_loss(
    real: Vec<f64>,
    recon: Vec<f64>,
    low: Vec<f64>,
    pseudo: Vec<f64>,
    alpha: f64,
    beta: f64,
) -> f64 {
    trainer::phase_two_loss_from_scores(&real, &recon, &low, &pseudo, alpha, beta)
}

/// Full training run into `out`; returns the run manifest.
#[pyfunction]
fn train(py: Python<'_>, config: &PyConfig, out: PathBuf) -> PyResult<PyObject> {
    let cfg = config.inner.clone();
    let manifest = py
        .allow_threads(|| experiment::cmd_train(&cfg, &out))
        .map_err(to_py)?;
    to_object(py, &manifest)
}

/// Scores stored checkpoints; returns the evaluation report.
#[pyfunction]
fn evaluate(
    py: Python<'_>,
    config: &PyConfig,
    out: PathBuf,
    generator: PathBuf,
    discriminator: PathBuf,
) -> PyResult<PyObject> {
    let cfg = config.inner.clone();
    let report = py
        .allow_threads(|| experiment::cmd_evaluate(&cfg, &out, &generator, &discriminator))
        .map_err(to_py)?;
    to_object(py, &report)
}

/// Every ablation variant from one phase-one run; returns the table.
#[pyfunction]
fn ablation(py: Python<'_>, config: &PyConfig, out: PathBuf) -> PyResult<PyObject> {
    let cfg = config.inner.clone();
    let table = py
        .allow_threads(|| experiment::cmd_ablation(&cfg, &out))
        .map_err(to_py)?;
    to_object(py, &table)
}

/// Stability sweep; returns rows of `{epoch, iteration, auc}`.
#[pyfunction]
fn stability(py: Python<'_>, config: &PyConfig, out: PathBuf) -> PyResult<PyObject> {
    let cfg = config.inner.clone();
    let rows = py
        .allow_threads(|| experiment::cmd_stability(&cfg, &out))
        .map_err(to_py)?;
    to_object(py, &rows)
}

/// Writes the pseudo-anomaly preview grid of a finished run; returns its path.
#[pyfunction]
#[pyo3(signature = (run, out, count = 8))]
fn pseudo_preview(py: Python<'_>, run: PathBuf, out: PathBuf, count: usize) -> PyResult<PathBuf> {
    py.allow_threads(|| experiment::cmd_pseudo_preview(&run, &out, count))
        .map_err(to_py)
}

#[pymodule]
pub fn advocc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("AdvoccError", m.py().get_type_bound::<AdvoccError>())?;
    m.add("DATA_ROOT_ENV", experiment::DATA_ROOT_ENV)?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(compute_auc, m)?)?;
    m.add_function(wrap_pyfunction!(compute_eer, m)?)?;
    m.add_function(wrap_pyfunction!(compute_f1_best, m)?)?;
    m.add_function(wrap_pyfunction!(anomaly_scores, m)?)?;
    m.add_function(wrap_pyfunction!(make_pseudo_anomaly, m)?)?;
    m.add_function(wrap_pyfunction!(phase_two_loss, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(ablation, m)?)?;
    m.add_function(wrap_pyfunction!(stability, m)?)?;
    m.add_function(wrap_pyfunction!(pseudo_preview, m)?)?;
    Ok(())
}
