//! Python bindings: documents, scorers, training, prediction, and error analysis.
//!
//! Structured results (reports, predictions) cross the boundary as plain
//! dicts and lists decoded from their JSON form.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::Serialize;

use coref_mtl::config::RunConfig;
use coref_mtl::evaluation::{self, EvalOptions, MentionMode};
use coref_mtl::inference::{self, PredictOptions, PredictionResult};
use coref_mtl::synthetic::{self, SyntheticConfig};
use coref_mtl::training::{self, Checkpoint};
use coref_mtl::{corpus, error_analysis, CorefError, Span};

create_exception!(coref_mtl_py, CorefMtlError, PyException);

fn py_err(e: CorefError) -> PyErr {
    CorefMtlError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| CorefMtlError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn spans(clusters: Vec<Vec<(usize, usize)>>) -> Vec<Vec<Span>> {
    clusters
        .into_iter()
        .map(|c| c.into_iter().map(|(s, e)| Span::new(s, e)).collect())
        .collect()
}

fn tuples(clusters: &[Vec<Span>]) -> Vec<Vec<(usize, usize)>> {
    clusters
        .iter()
        .map(|c| c.iter().map(|s| (s.start, s.end)).collect())
        .collect()
}

fn mention_mode(name: &str) -> PyResult<MentionMode> {
    match name {
        "coreferent" => Ok(MentionMode::Coreferent),
        "all" => Ok(MentionMode::All),
        other => Err(CorefMtlError::new_err(format!(
            "unknown mention mode {other:?}"
        ))),
    }
}

/// A tokenized document with its gold coreference and mention layers.
#[pyclass(name = "Document", module = "coref_mtl_py", from_py_object)]
#[derive(Clone)]
pub struct PyDocument {
    inner: corpus::Document,
}

#[pymethods]
impl PyDocument {
    #[getter]
    fn doc_key(&self) -> String {
        self.inner.doc_key.clone()
    }

    #[getter]
    fn genre(&self) -> String {
        self.inner.genre.clone()
    }

    #[getter]
    fn tokens(&self) -> Vec<String> {
        self.inner.tokens().map(str::to_string).collect()
    }

    #[getter]
    fn sentences(&self) -> Vec<Vec<String>> {
        self.inner.sentences.clone()
    }

    /// Gold clusters as lists of inclusive `(start, end)` token spans.
    #[getter]
    fn clusters(&self) -> Vec<Vec<(usize, usize)>> {
        tuples(&self.inner.gold_clusters)
    }

    /// Gold mentions as dicts with span, entity type, status, and cluster id.
    fn mentions<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.gold_mentions)
    }

    fn to_json(&self) -> PyResult<String> {
        corpus::write_jsonl(std::slice::from_ref(&self.inner))
            .map(|s| s.trim_end().to_string())
            .map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.token_count()
    }

    fn __repr__(&self) -> String {
        format!(
            "Document(doc_key={:?}, tokens={}, clusters={})",
            self.inner.doc_key,
            self.inner.token_count(),
            self.inner.gold_clusters.len()
        )
    }
}

fn wrap(docs: Vec<corpus::Document>) -> Vec<PyDocument> {
    docs.into_iter().map(|inner| PyDocument { inner }).collect()
}

fn unwrap(docs: &[PyRef<'_, PyDocument>]) -> Vec<corpus::Document> {
    docs.iter().map(|d| d.inner.clone()).collect()
}

#[pyfunction]
fn parse_conll(text: &str) -> PyResult<Vec<PyDocument>> {
    corpus::parse_conll(text).map(wrap).map_err(py_err)
}

#[pyfunction]
fn parse_jsonl(text: &str) -> PyResult<Vec<PyDocument>> {
    corpus::parse_jsonl(text).map(wrap).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (docs, include_singletons = false))]
fn write_conll(docs: Vec<PyRef<'_, PyDocument>>, include_singletons: bool) -> String {
    corpus::write_conll(&unwrap(&docs), include_singletons)
}

/// Merges a sidecar mention layer into the given documents.
#[pyfunction]
fn merge_sidecar(docs: Vec<PyRef<'_, PyDocument>>, sidecar: &str) -> PyResult<Vec<PyDocument>> {
    let rows = corpus::parse_sidecar(sidecar).map_err(py_err)?;
    corpus::merge_sidecar_corpus(unwrap(&docs), &rows)
        .map(wrap)
        .map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (documents = 20, seed = 0, singleton_ratio = 0.4, distractor_rate = 0.5))]
fn generate_synthetic(
    documents: usize,
    seed: u64,
    singleton_ratio: f64,
    distractor_rate: f64,
) -> PyResult<Vec<PyDocument>> {
    let cfg = SyntheticConfig {
        documents,
        seed,
        singleton_ratio,
        distractor_rate,
        ..Default::default()
    };
    synthetic::generate(&cfg).map(wrap).map_err(py_err)
}

/// MUC `(precision, recall, f1)` for one document's clusters.
#[pyfunction]
fn muc(key: Vec<Vec<(usize, usize)>>, response: Vec<Vec<(usize, usize)>>) -> (f64, f64, f64) {
    let p = evaluation::score_muc(&spans(key), &spans(response));
    (p.precision, p.recall, p.f1)
}

#[pyfunction]
fn b_cubed(key: Vec<Vec<(usize, usize)>>, response: Vec<Vec<(usize, usize)>>) -> (f64, f64, f64) {
    let p = evaluation::score_b_cubed(&spans(key), &spans(response));
    (p.precision, p.recall, p.f1)
}

#[pyfunction]
fn ceaf_phi4(key: Vec<Vec<(usize, usize)>>, response: Vec<Vec<(usize, usize)>>) -> (f64, f64, f64) {
    let p = evaluation::score_ceaf_phi4(&spans(key), &spans(response));
    (p.precision, p.recall, p.f1)
}

/// Corpus-level report comparing gold documents with response documents.
#[pyfunction]
#[pyo3(signature = (gold, response, keep_singletons = false, mention_mode = "coreferent"))]
fn evaluate<'py>(
    py: Python<'py>,
    gold: Vec<PyRef<'py, PyDocument>>,
    response: Vec<PyRef<'py, PyDocument>>,
    keep_singletons: bool,
    mention_mode: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let opts = EvalOptions {
        keep_singletons,
        mention_mode: self::mention_mode(mention_mode)?,
    };
    let preds: Vec<PredictionResult> = response
        .iter()
        .map(|d| PredictionResult::from_document(&d.inner))
        .collect();
    let report = evaluation::evaluate(&unwrap(&gold), &preds, opts).map_err(py_err)?;
    to_py(py, &report)
}

/// Surface class of the anaphor at `(start, end)`.
#[pyfunction]
fn classify_anaphor(doc: PyRef<'_, PyDocument>, start: usize, end: usize) -> String {
    error_analysis::classify_anaphor(&doc.inner, Span::new(start, end))
        .as_str()
        .to_string()
}

/// Errors made by system `a` but not `b`, and vice versa.
#[pyfunction]
fn contrast_errors<'py>(
    py: Python<'py>,
    gold: Vec<PyRef<'py, PyDocument>>,
    system_a: Vec<PyRef<'py, PyDocument>>,
    system_b: Vec<PyRef<'py, PyDocument>>,
) -> PyResult<Bound<'py, PyAny>> {
    let read = |docs: &[PyRef<'py, PyDocument>]| -> Vec<PredictionResult> {
        docs.iter()
            .map(|d| PredictionResult::from_document(&d.inner))
            .collect()
    };
    let c = error_analysis::contrast(&unwrap(&gold), &read(&system_a), &read(&system_b))
        .map_err(py_err)?;
    to_py(py, &c)
}

/// A trained model together with its optimizer state.
#[pyclass(name = "Model", module = "coref_mtl_py")]
pub struct PyModel {
    ckpt: Checkpoint,
}

#[pymethods]
impl PyModel {
    /// Trains from scratch. `config` is TOML text; `preset` names a task-weight preset.
    #[staticmethod]
    #[pyo3(signature = (docs, config = None, preset = None, steps = None, seed = None))]
    fn train(
        py: Python<'_>,
        docs: Vec<PyRef<'_, PyDocument>>,
        config: Option<&str>,
        preset: Option<&str>,
        steps: Option<usize>,
        seed: Option<u64>,
    ) -> PyResult<PyModel> {
        let mut cfg = match config {
            Some(text) => RunConfig::from_toml_str(text).map_err(py_err)?,
            None => RunConfig::default(),
        };
        if let Some(name) = preset {
            cfg.apply_preset(name).map_err(py_err)?;
        }
        if let Some(s) = steps {
            cfg.train.steps = s;
        }
        if let Some(s) = seed {
            cfg.train.seed = s;
        }
        cfg.validate().map_err(py_err)?;
        let docs = unwrap(&docs);
        let outcome = py
            .detach(|| training::train(&docs, &[], cfg.model, cfg.train))
            .map_err(py_err)?;
        Ok(PyModel { ckpt: outcome.last })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<PyModel> {
        Checkpoint::load(&path)
            .map(|ckpt| PyModel { ckpt })
            .map_err(py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.ckpt.save(&path).map_err(py_err)
    }

    #[getter]
    fn step(&self) -> usize {
        self.ckpt.step
    }

    /// Predicted clusters, singletons, and mention labels as a document.
    #[pyo3(signature = (doc, threshold = inference::DEFAULT_THRESHOLD, singletons = true))]
    fn predict(
        &self,
        doc: PyRef<'_, PyDocument>,
        threshold: f64,
        singletons: bool,
    ) -> PyResult<PyDocument> {
        let opts = PredictOptions {
            threshold,
            singletons,
        };
        let pred = inference::predict(&self.ckpt.model, &doc.inner, &opts).map_err(py_err)?;
        Ok(PyDocument {
            inner: pred.to_document(&doc.inner),
        })
    }
}

#[pymodule]
fn coref_mtl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CorefMtlError", m.py().get_type::<CorefMtlError>())?;
    m.add_class::<PyDocument>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(parse_conll, m)?)?;
    m.add_function(wrap_pyfunction!(parse_jsonl, m)?)?;
    m.add_function(wrap_pyfunction!(write_conll, m)?)?;
    m.add_function(wrap_pyfunction!(merge_sidecar, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(muc, m)?)?;
    m.add_function(wrap_pyfunction!(b_cubed, m)?)?;
    m.add_function(wrap_pyfunction!(ceaf_phi4, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(classify_anaphor, m)?)?;
    m.add_function(wrap_pyfunction!(contrast_errors, m)?)?;
    Ok(())
}
