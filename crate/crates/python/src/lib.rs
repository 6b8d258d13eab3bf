//! Python bindings. Results are plain dicts and lists decoded from the same
//! JSON documents the command line prints.

use std::collections::BTreeMap;
use std::path::Path;

use protoml_core::cardgen::{generate_card, parse_manual_fields, CardFormat};
use protoml_core::dataflow::{explain as run_explain, export_flow, FlowFormat, PatternTable};
use protoml_core::recommender::{ingest_corpus, recommendations_json, VectorIndex};
use protoml_core::recorder::Store;
use protoml_core::reviewer::{run_review, Catalog};
use protoml_core::{canonical, canonical_hash, parse_notebook, Notebook};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde_json::Value;

create_exception!(protoml, ProtomlError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    ProtomlError::new_err(e.to_string())
}

fn to_py(py: Python<'_>, value: &Value) -> PyResult<Py<PyAny>> {
    let json = py.import("json")?;
    Ok(json.call_method1("loads", (canonical::value_to_string(value),))?.unbind())
}

fn notebook(text: &str) -> PyResult<Notebook> {
    parse_notebook(text.as_bytes()).map_err(err)
}

fn catalog(path: Option<&str>) -> PyResult<Catalog> {
    match path {
        Some(p) => Catalog::load(Path::new(p)).map_err(err),
        None => Ok(Catalog::shipped()),
    }
}

/// SHA-256 of the canonical form of an `.ipynb` document.
#[pyfunction]
fn notebook_hash(ipynb: &str) -> PyResult<String> {
    Ok(canonical_hash(&notebook(ipynb)?).to_string())
}

/// Activity flow (`flow/1`) of an `.ipynb` document, or Graphviz DOT when `format="dot"`.
#[pyfunction]
#[pyo3(signature = (ipynb, format = "json"))]
fn explain(py: Python<'_>, ipynb: &str, format: &str) -> PyResult<Py<PyAny>> {
    let nb = notebook(ipynb)?;
    let (_, flow) = run_explain(&nb, PatternTable::shipped(), None);
    match format {
        "json" => to_py(py, &flow.to_json_value()),
        "dot" => Ok(export_flow(&flow, FlowFormat::Dot).into_pyobject(py)?.into_any().unbind()),
        other => Err(err(format!("unknown format {other:?}"))),
    }
}

/// Review report (`review-report/1`) against the shipped or a custom rule catalog.
#[pyfunction]
#[pyo3(signature = (ipynb, catalog_path = None))]
fn review(py: Python<'_>, ipynb: &str, catalog_path: Option<&str>) -> PyResult<Py<PyAny>> {
    let nb = notebook(ipynb)?;
    let (graph, _) = run_explain(&nb, PatternTable::shipped(), None);
    to_py(py, &run_review(&nb, &catalog(catalog_path)?, &graph).to_json_value())
}

/// Prototype card as a dict, or Markdown text when `format="markdown"`.
#[pyfunction]
#[pyo3(signature = (ipynb, generated_at, manual_json = None, format = "json"))]
fn card(py: Python<'_>, ipynb: &str, generated_at: &str, manual_json: Option<&str>, format: &str) -> PyResult<Py<PyAny>> {
    let nb = notebook(ipynb)?;
    let (graph, flow) = run_explain(&nb, PatternTable::shipped(), None);
    let report = run_review(&nb, &Catalog::shipped(), &graph);
    let manual = match manual_json {
        Some(text) => parse_manual_fields(text).map_err(err)?,
        None => BTreeMap::new(),
    };
    let card = generate_card(&nb, &flow, &report, &[], &manual, generated_at).map_err(err)?;
    match format.parse::<CardFormat>().map_err(err)? {
        CardFormat::Json => to_py(py, &card.to_json_value()),
        CardFormat::Markdown => Ok(card.render(CardFormat::Markdown).into_pyobject(py)?.into_any().unbind()),
    }
}

/// Records an `.ipynb` document in the repository and returns the snapshot.
#[pyfunction]
#[pyo3(signature = (repo, ipynb, trigger_cell_id = None, comment = None))]
fn record(py: Python<'_>, repo: &str, ipynb: &str, trigger_cell_id: Option<&str>, comment: Option<&str>) -> PyResult<Py<PyAny>> {
    let nb = notebook(ipynb)?;
    let mut store = Store::open(repo).map_err(err)?;
    let snap = store.record(&nb, trigger_cell_id, comment).map_err(err)?;
    to_py(py, &serde_json::to_value(snap).map_err(err)?)
}

/// The experiment tree (`tree/1`) of a repository.
#[pyfunction]
fn tree(py: Python<'_>, repo: &str) -> PyResult<Py<PyAny>> {
    let store = Store::open(repo).map_err(err)?;
    to_py(py, &store.tree().to_json_value())
}

/// Moves head to a node (full id or unique prefix) and returns its `.ipynb` text.
#[pyfunction]
fn checkout(repo: &str, node: &str) -> PyResult<String> {
    let mut store = Store::open(repo).map_err(err)?;
    let id = store.resolve(node).map_err(err)?;
    Ok(store.checkout(&id).map_err(err)?.to_ipynb())
}

/// Builds a recommendation index over a directory and writes it to `index_path`.
#[pyfunction]
fn build_index(corpus_dir: &str, index_path: &str, built_at: &str) -> PyResult<usize> {
    let ingested = ingest_corpus(Path::new(corpus_dir), Some(Path::new(index_path)), built_at).map_err(err)?;
    Ok(ingested.index.n_docs)
}

/// Cells most similar to `source` (`recommendations/1`).
#[pyfunction]
#[pyo3(signature = (index_path, source, k = 5))]
fn recommend_cells(py: Python<'_>, index_path: &str, source: &str, k: usize) -> PyResult<Py<PyAny>> {
    let index = VectorIndex::load(Path::new(index_path)).map_err(err)?;
    to_py(py, &recommendations_json("cell", &index.recommend_cells(source, k, None)))
}

/// Notebooks most similar to an `.ipynb` document (`recommendations/1`).
#[pyfunction]
#[pyo3(signature = (index_path, ipynb, k = 5))]
fn recommend_notebooks(py: Python<'_>, index_path: &str, ipynb: &str, k: usize) -> PyResult<Py<PyAny>> {
    let index = VectorIndex::load(Path::new(index_path)).map_err(err)?;
    let nb = notebook(ipynb)?;
    to_py(py, &recommendations_json("notebook", &index.recommend_notebooks(&nb, k, None)))
}

#[pymodule]
fn protoml(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ProtomlError", m.py().get_type::<ProtomlError>())?;
    m.add_function(wrap_pyfunction!(notebook_hash, m)?)?;
    m.add_function(wrap_pyfunction!(explain, m)?)?;
    m.add_function(wrap_pyfunction!(review, m)?)?;
    m.add_function(wrap_pyfunction!(card, m)?)?;
    m.add_function(wrap_pyfunction!(record, m)?)?;
    m.add_function(wrap_pyfunction!(tree, m)?)?;
    m.add_function(wrap_pyfunction!(checkout, m)?)?;
    m.add_function(wrap_pyfunction!(build_index, m)?)?;
    m.add_function(wrap_pyfunction!(recommend_cells, m)?)?;
    m.add_function(wrap_pyfunction!(recommend_notebooks, m)?)?;
    Ok(())
}
