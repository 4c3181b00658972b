use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError, PyValueError};
use pyo3::prelude::*;

use forge::augment::{self, AugmentMode, AugmentationConfig};
use forge::backend::{self as be, LmBackend, MaskQuery, MockBackend, MockConfig, ServerHandle};
use forge::dataset::{self, SplitConfig, WindowConfig};
use forge::decoder::{self, DecodeConfig};
use forge::ingest;
use forge::metrics::{self, RunMeta, ScoredPair};
use forge::{text, Error};

create_exception!(convo_forge, ConvoForgeError, PyException);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        e @ (Error::InvalidConfig(_) | Error::TooFewItems { .. } | Error::WindowLength { .. } | Error::IndexCount { .. }) => {
            PyValueError::new_err(e.to_string())
        }
        e => ConvoForgeError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A conversation: an origin id and its utterance texts.
#[pyclass(name = "Conversation", from_py_object)]
#[derive(Clone)]
struct PyConversation {
    inner: ingest::Conversation,
}

#[pymethods]
impl PyConversation {
    #[new]
    fn new(origin: String, utterances: Vec<String>) -> Self {
        Self { inner: ingest::Conversation::from_texts(origin, &utterances) }
    }

    #[getter]
    fn origin(&self) -> String {
        self.inner.origin.clone()
    }

    #[getter]
    fn utterances(&self) -> Vec<String> {
        self.inner.utterances.iter().map(|u| u.text.clone()).collect()
    }

    fn tokens(&self) -> Vec<Vec<String>> {
        self.inner.utterances.iter().map(|u| u.surface()).collect()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(Self { inner: serde_json::from_str(s).map_err(json_err)? })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Conversation(origin={:?}, turns={})", self.inner.origin, self.inner.len())
    }
}

fn wrap(convs: Vec<ingest::Conversation>) -> Vec<PyConversation> {
    convs.into_iter().map(|inner| PyConversation { inner }).collect()
}

fn unwrap(convs: Vec<PyConversation>) -> Vec<ingest::Conversation> {
    convs.into_iter().map(|c| c.inner).collect()
}

/// Any language-model backend: the deterministic mock or an HTTP service.
#[pyclass(name = "Backend", frozen)]
struct PyBackend {
    inner: Arc<dyn LmBackend>,
    locator: String,
}

#[pymethods]
impl PyBackend {
    /// `mock`, `mock:<config.json>` or an `http(s)://` base URL.
    #[new]
    fn new(locator: &str) -> PyResult<Self> {
        Ok(Self { inner: be::open_backend(locator).map_err(py_err)?, locator: locator.to_string() })
    }

    /// A mock built from a JSON config string; missing fields take defaults.
    #[staticmethod]
    #[pyo3(signature = (config_json=None))]
    fn mock(config_json: Option<&str>) -> PyResult<Self> {
        let cfg: MockConfig = match config_json {
            Some(s) => serde_json::from_str(s).map_err(json_err)?,
            None => MockConfig::default(),
        };
        Ok(Self { inner: Arc::new(MockBackend::new(cfg).map_err(py_err)?), locator: "mock".into() })
    }

    fn meta(&self) -> PyResult<HashMap<&'static str, String>> {
        let m = self.inner.meta().map_err(py_err)?;
        Ok(HashMap::from([
            ("embed_dim", m.embed_dim.to_string()),
            ("max_len", m.max_len.to_string()),
            ("scores_first_token", m.scores_first_token.to_string()),
            ("eos", m.eos),
            ("mask", m.mask),
        ]))
    }

    #[pyo3(signature = (tokens, mask_index, top_k=5))]
    fn mask_fill(&self, py: Python<'_>, tokens: Vec<String>, mask_index: usize, top_k: usize) -> PyResult<Vec<(String, f64)>> {
        let q = MaskQuery { tokens, mask_index };
        let out = py.detach(|| self.inner.mask_fill(&q, top_k)).map_err(py_err)?;
        Ok(out.into_iter().map(|c| (c.token, c.score)).collect())
    }

    fn token_logprobs(&self, py: Python<'_>, tokens: Vec<String>) -> PyResult<Vec<f64>> {
        py.detach(|| self.inner.token_logprobs(&tokens)).map_err(py_err)
    }

    #[pyo3(signature = (tokens, top_k=0))]
    fn next_token(&self, py: Python<'_>, tokens: Vec<String>, top_k: usize) -> PyResult<Vec<(String, f64)>> {
        let d = py.detach(|| self.inner.next_token(&tokens, top_k)).map_err(py_err)?;
        Ok(d.tokens.into_iter().zip(d.logprobs).collect())
    }

    fn embed(&self, py: Python<'_>, tokens: Vec<String>) -> PyResult<Vec<Vec<f64>>> {
        py.detach(|| self.inner.embed(&tokens)).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Backend({:?})", self.locator)
    }
}

/// The mock backend served over HTTP until `stop()` is called.
#[pyclass(name = "MockServer", frozen)]
struct PyMockServer {
    url: String,
    handle: Mutex<Option<ServerHandle>>,
}

#[pymethods]
impl PyMockServer {
    #[new]
    #[pyo3(signature = (config_json=None, port=0))]
    fn new(config_json: Option<&str>, port: u16) -> PyResult<Self> {
        let backend = PyBackend::mock(config_json)?;
        let handle = be::serve(backend.inner, &format!("127.0.0.1:{port}"), 4).map_err(py_err)?;
        Ok(Self { url: handle.url(), handle: Mutex::new(Some(handle)) })
    }

    #[getter]
    fn url(&self) -> String {
        self.url.clone()
    }

    fn stop(&self) {
        if let Ok(mut h) = self.handle.lock() {
            h.take();
        }
    }
}

#[pyfunction]
fn clean_text(raw: &str) -> String {
    text::clean_text(raw)
}

#[pyfunction]
fn tokenize(s: &str) -> Vec<String> {
    text::surface(&text::tokenize(s))
}

#[pyfunction]
fn replacement_count(p: f64, length: usize) -> usize {
    augment::replacement_count(p, length)
}

/// Parses a JSONL thread dump and returns `(conversations, skipped_record_errors)`.
#[pyfunction]
fn ingest_threads(jsonl: &str) -> PyResult<(Vec<PyConversation>, Vec<String>)> {
    let dump = ingest::parse_thread_dump(jsonl.as_bytes()).map_err(py_err)?;
    let errors = dump.errors.iter().map(|e| e.to_string()).collect();
    Ok((wrap(ingest::extract_all_chains(&dump.threads)), errors))
}

#[pyfunction]
#[pyo3(signature = (conversations, seed=42))]
fn split(conversations: Vec<PyConversation>, seed: u64) -> PyResult<HashMap<&'static str, Vec<PyConversation>>> {
    let cfg = SplitConfig { seed, ..Default::default() };
    let b = dataset::split(&unwrap(conversations), &cfg).map_err(py_err)?;
    Ok(HashMap::from([
        ("masklm_finetune", wrap(b.masklm_finetune)),
        ("masklm_eval", wrap(b.masklm_eval)),
        ("gen_train", wrap(b.gen_train)),
        ("gen_test", wrap(b.gen_test)),
    ]))
}

#[pyfunction]
#[pyo3(signature = (conversations, turns=4))]
fn extract_windows(conversations: Vec<PyConversation>, turns: usize) -> PyResult<Vec<PyConversation>> {
    let cfg = WindowConfig::new(turns).map_err(py_err)?;
    Ok(wrap(dataset::extract_all_windows(&unwrap(conversations), &cfg)))
}

#[pyfunction]
#[pyo3(signature = (conversations, backend, pct=0.10, seed=42, mode="independent", top_k=5, workers=8))]
#[allow(clippy::too_many_arguments)]
fn augment_corpus(
    py: Python<'_>,
    conversations: Vec<PyConversation>,
    backend: &PyBackend,
    pct: f64,
    seed: u64,
    mode: &str,
    top_k: usize,
    workers: usize,
) -> PyResult<Vec<PyConversation>> {
    let mode: AugmentMode = mode.parse().map_err(py_err)?;
    let cfg = AugmentationConfig { percentage: pct, master_seed: seed, mode, top_k, ..Default::default() };
    let convs = unwrap(conversations);
    let out = py
        .detach(|| augment::augment_corpus_with_workers(&convs, &cfg, backend.inner.as_ref(), workers))
        .map_err(py_err)?;
    Ok(wrap(out))
}

/// Originals then synthetic, each as `(conversation, provenance, pct)`.
#[pyfunction]
fn merge_corpora(
    original: Vec<PyConversation>,
    synthetic: Vec<PyConversation>,
    pct: f64,
) -> Vec<(PyConversation, &'static str, f64)> {
    augment::merge_corpora(&unwrap(original), &unwrap(synthetic), pct)
        .into_iter()
        .map(|t| {
            let tag = match t.provenance {
                augment::Provenance::Real => "real",
                augment::Provenance::Synthetic => "synthetic",
            };
            (PyConversation { inner: t.conversation }, tag, t.pct)
        })
        .collect()
}

/// Beam search from `context`; returns `(tokens, score, truncated)`.
#[pyfunction]
#[pyo3(signature = (context, backend, beam_width=5, max_new_tokens=64, eos=None, trigram_block=true))]
fn generate(
    py: Python<'_>,
    context: Vec<String>,
    backend: &PyBackend,
    beam_width: usize,
    max_new_tokens: usize,
    eos: Option<String>,
    trigram_block: bool,
) -> PyResult<(Vec<String>, f64, bool)> {
    let eos = match eos {
        Some(e) => e,
        None => backend.inner.meta().map_err(py_err)?.eos,
    };
    let cfg = DecodeConfig { beam_width, max_new_tokens, trigram_block, eos, ..Default::default() };
    let out = py.detach(|| decoder::generate(&context, &cfg, backend.inner.as_ref())).map_err(py_err)?;
    Ok((out.tokens, out.score, out.truncated))
}

#[pyfunction]
fn has_repeat_trigram(tokens: Vec<String>) -> bool {
    decoder::has_repeat_trigram(&tokens)
}

#[pyfunction]
fn perplexity(py: Python<'_>, corpus: Vec<Vec<String>>, backend: &PyBackend) -> PyResult<f64> {
    py.detach(|| metrics::perplexity(&corpus, backend.inner.as_ref())).map_err(py_err)
}

/// `(precision, recall, f1)` of greedy embedding matching.
#[pyfunction]
fn embed_match(candidate: Vec<String>, reference: Vec<String>, backend: &PyBackend) -> PyResult<(f64, f64, f64)> {
    let m = metrics::embed_match_score(&candidate, &reference, backend.inner.as_ref()).map_err(py_err)?;
    Ok((m.precision, m.recall, m.f1))
}

/// `(function_words, content_words)`.
#[pyfunction]
fn word_class_counts(tokens: Vec<String>) -> (usize, usize) {
    let c = metrics::word_class_counts(&tokens);
    (c.function, c.content)
}

/// Scores `(context, hypothesis, reference)` token triples; returns the report as a JSON string.
#[pyfunction]
#[pyo3(signature = (pairs, backend, eos=None))]
fn evaluate(py: Python<'_>, pairs: Vec<(Vec<String>, Vec<String>, Vec<String>)>, backend: &PyBackend, eos: Option<String>) -> PyResult<String> {
    let eos = match eos {
        Some(e) => e,
        None => backend.inner.meta().map_err(py_err)?.eos,
    };
    let pairs: Vec<ScoredPair> = pairs
        .into_iter()
        .map(|(context, hypothesis, reference)| ScoredPair { context, hypothesis, reference })
        .collect();
    let b = backend.inner.as_ref();
    let report = py.detach(|| metrics::evaluate(&pairs, &eos, b, b, RunMeta::default())).map_err(py_err)?;
    serde_json::to_string(&report).map_err(json_err)
}

#[pymodule]
#[pyo3(name = "convo_forge")]
fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ConvoForgeError", m.py().get_type::<ConvoForgeError>())?;
    m.add("DEFAULT_EOS", forge::DEFAULT_EOS)?;
    m.add_class::<PyConversation>()?;
    m.add_class::<PyBackend>()?;
    m.add_class::<PyMockServer>()?;
    m.add_function(wrap_pyfunction!(clean_text, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(replacement_count, m)?)?;
    m.add_function(wrap_pyfunction!(ingest_threads, m)?)?;
    m.add_function(wrap_pyfunction!(split, m)?)?;
    m.add_function(wrap_pyfunction!(extract_windows, m)?)?;
    m.add_function(wrap_pyfunction!(augment_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(merge_corpora, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(has_repeat_trigram, m)?)?;
    m.add_function(wrap_pyfunction!(perplexity, m)?)?;
    m.add_function(wrap_pyfunction!(embed_match, m)?)?;
    m.add_function(wrap_pyfunction!(word_class_counts, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
