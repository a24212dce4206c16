//! Python bindings: datasets, training runs, checkpoints and the metric.

use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyDictMethods};

use memesent::cec::infer_cec;
use memesent::ctm::infer_sentiment as rule;
use memesent::dataset::{generate_synthetic, load_manifest, save_manifest, LabelDistributionSpec, MemeRecord, SplitName};
use memesent::embedding::{encode_meme, ImageRef, MemeInput};
use memesent::training::{
    encode_records, evaluate_model, load_checkpoint, prepare_splits, run, save_checkpoint, Checkpoint, Metrics,
    RunConfig, TrainedModel,
};
use memesent::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Divergence { .. } | Error::Integrity { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// A list of labeled meme records.
#[pyclass(module = "pymemesent")]
struct Dataset {
    records: Vec<MemeRecord>,
    base_dir: PathBuf,
}

#[pymethods]
impl Dataset {
    /// Label-faithful synthetic records; `spec` is train (tableA), valid or test.
    #[staticmethod]
    #[pyo3(signature = (n, seed = 0, spec = "tableA"))]
    fn synthetic(n: usize, seed: u64, spec: &str) -> PyResult<Self> {
        let spec = LabelDistributionSpec::by_name(spec).map_err(py_err)?;
        let split = generate_synthetic(&spec, n, seed).map_err(py_err)?;
        Ok(Self {
            records: split.records,
            base_dir: PathBuf::from("."),
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let loaded = load_manifest(&path, SplitName::Train).map_err(py_err)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self {
            records: loaded.split.records,
            base_dir,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_manifest(&self.records, &path).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.records.len()
    }

    fn meme_ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.meme_id.clone()).collect()
    }

    fn sentiments(&self) -> Vec<String> {
        self.records.iter().map(|r| r.sentiment.to_string()).collect()
    }

    fn scales(&self) -> Vec<[u8; 4]> {
        self.records.iter().map(|r| r.scales.to_array()).collect()
    }
}

fn metrics_dict<'py>(py: Python<'py>, m: &Metrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    if let Some(v) = m.task_a {
        d.set_item("A", v)?;
    }
    if let Some(s) = &m.task_b {
        d.set_item("B", s.mean)?;
        d.set_item("B_per_emotion", s.per_emotion.to_vec())?;
    }
    if let Some(s) = &m.task_c {
        d.set_item("C", s.mean)?;
        d.set_item("C_per_emotion", s.per_emotion.to_vec())?;
    }
    Ok(d)
}

/// A trained model together with the encoder that feeds it.
#[pyclass(module = "pymemesent")]
struct Model {
    checkpoint: Checkpoint,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            checkpoint: load_checkpoint(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&self.checkpoint, &path).map_err(py_err)
    }

    fn to_bytes(&self) -> Vec<u8> {
        self.checkpoint.to_bytes()
    }

    /// "ctm", "cec" or "linear".
    #[getter]
    fn kind(&self) -> &'static str {
        match self.checkpoint.model {
            TrainedModel::Ctm(_) => "ctm",
            TrainedModel::Cec(_) => "cec",
            TrainedModel::Linear(_) => "linear",
        }
    }

    /// Learned (good, bad) thresholds of a sentiment model.
    #[getter]
    fn thresholds(&self) -> Option<(f64, f64)> {
        match &self.checkpoint.model {
            TrainedModel::Ctm(s) => Some((s.tau_good, s.tau_bad)),
            _ => None,
        }
    }

    fn evaluate<'py>(&self, py: Python<'py>, data: &Dataset) -> PyResult<Bound<'py, PyDict>> {
        let samples = encode_records(&data.records, &self.checkpoint.encoder, &data.base_dir).map_err(py_err)?;
        let m = evaluate_model(&self.checkpoint.model, &samples).map_err(py_err)?;
        metrics_dict(py, &m)
    }

    /// Sentiment models return {"sentiment": ...}; emotion models return
    /// {"presence": [bool; 4], "scales": [int; 4]}.
    #[pyo3(signature = (caption, image = None, meme_id = None))]
    fn predict<'py>(
        &self,
        py: Python<'py>,
        caption: &str,
        image: Option<PathBuf>,
        meme_id: Option<&str>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let image = image.map_or(ImageRef::Absent, ImageRef::Path);
        let input = MemeInput {
            meme_id: meme_id.unwrap_or(caption),
            image: &image,
            caption,
        };
        let backends = self.checkpoint.encoder.backend_set().map_err(py_err)?;
        let emb = encode_meme(&input, &backends).map_err(py_err)?;
        let d = PyDict::new(py);
        match &self.checkpoint.model {
            TrainedModel::Ctm(s) => {
                let (g, b) = s.student_probs(&emb).map_err(py_err)?;
                d.set_item("sentiment", s.classify(&emb).map_err(py_err)?.to_string())?;
                d.set_item("g", g)?;
                d.set_item("b", b)?;
            }
            TrainedModel::Linear(m) => {
                d.set_item("sentiment", m.classify(&emb).map_err(py_err)?.to_string())?;
                d.set_item("probs", m.probs(&emb).map_err(py_err)?)?;
            }
            TrainedModel::Cec(s) => {
                let (scales, presence) = infer_cec(&emb, s).map_err(py_err)?;
                d.set_item("presence", presence.to_array().to_vec())?;
                d.set_item("scales", scales.to_array().to_vec())?;
            }
        }
        Ok(d)
    }
}

fn toml_value(v: &Bound<'_, PyAny>) -> PyResult<String> {
    if let Ok(b) = v.extract::<bool>() {
        Ok(b.to_string())
    } else if let Ok(i) = v.extract::<i64>() {
        Ok(i.to_string())
    } else if let Ok(f) = v.extract::<f64>() {
        Ok(format!("{f:?}"))
    } else if let Ok(s) = v.extract::<String>() {
        Ok(format!("{s:?}"))
    } else {
        Err(PyValueError::new_err(format!("unsupported config value {v}")))
    }
}

/// Trains one task/variant on an 80/10/10 split of `data`. Keyword
/// arguments are config keys (epochs, learning_rate, k, ...).
/// Returns (model, report JSON text).
#[pyfunction]
#[pyo3(signature = (data, task = "A", variant = "full", **config))]
fn train(data: &Dataset, task: &str, variant: &str, config: Option<&Bound<'_, PyDict>>) -> PyResult<(Model, String)> {
    let mut text = format!("task = {task:?}\nvariant = {variant:?}\n");
    if let Some(cfg) = config {
        for (k, v) in cfg.iter() {
            text.push_str(&format!("{} = {}\n", k.extract::<String>()?, toml_value(&v)?));
        }
    }
    let cfg = RunConfig::from_toml_str(&text).map_err(py_err)?;
    let splits = prepare_splits(&data.records, &cfg, &data.base_dir).map_err(py_err)?;
    let out = run(&cfg, &splits).map_err(py_err)?;
    Ok((
        Model {
            checkpoint: out.checkpoint,
        },
        out.report.to_json(),
    ))
}

/// Support-weighted F1 over string labels.
#[pyfunction]
fn weighted_f1(preds: Vec<String>, golds: Vec<String>) -> PyResult<f64> {
    memesent::evaluation::weighted_f1(&preds, &golds).map_err(py_err)
}

/// Sentiment from student probabilities and thresholds.
#[pyfunction]
fn infer_sentiment(g: f64, b: f64, tau_good: f64, tau_bad: f64) -> String {
    rule(g, b, tau_good, tau_bad).to_string()
}

#[pymodule]
fn pymemesent(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_f1, m)?)?;
    m.add_function(wrap_pyfunction!(infer_sentiment, m)?)?;
    Ok(())
}
