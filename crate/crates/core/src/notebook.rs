//! In-memory notebook model, `.ipynb` parsing and canonical serialization.
//!
//! Only what the analyses need is modeled: cell kind, source, execution count
//! and a digest of the outputs. Canonical form is documented in
//! `docs/canonical-format.md`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::canonical;
use crate::hash::ContentHash;

/// Highest (and only) supported notebook format major version.
pub const SUPPORTED_MAJOR: u64 = 4;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum NotebookError {
    #[error("malformed notebook: {0}")]
    Malformed(String),
    #[error("unsupported notebook format version {0} (only major version 4 is supported)")]
    UnsupportedVersion(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Code,
    Markdown,
    Raw,
}

impl CellKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Code => "code",
            CellKind::Markdown => "markdown",
            CellKind::Raw => "raw",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "code" => Some(CellKind::Code),
            "markdown" => Some(CellKind::Markdown),
            "raw" => Some(CellKind::Raw),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub cell_id: String,
    pub kind: CellKind,
    /// Logical lines joined with `\n`.
    pub source: String,
    /// Always `None` for markdown and raw cells.
    pub execution_count: Option<u64>,
    pub outputs_digest: Option<ContentHash>,
}

impl Cell {
    pub fn code(cell_id: impl Into<String>, source: impl Into<String>) -> Self {
        Cell {
            cell_id: cell_id.into(),
            kind: CellKind::Code,
            source: source.into(),
            execution_count: None,
            outputs_digest: None,
        }
    }

    pub fn markdown(cell_id: impl Into<String>, source: impl Into<String>) -> Self {
        Cell {
            cell_id: cell_id.into(),
            kind: CellKind::Markdown,
            source: source.into(),
            execution_count: None,
            outputs_digest: None,
        }
    }

    pub fn with_execution_count(mut self, count: u64) -> Self {
        self.execution_count = Some(count);
        self
    }

    pub fn is_code(&self) -> bool {
        self.kind == CellKind::Code
    }

    /// Digest of everything except the id; used to align cells whose ids differ.
    pub fn content_hash(&self) -> ContentHash {
        canonical::hash(&json!([
            self.kind.as_str(),
            self.source,
            self.execution_count,
            self.outputs_digest
        ]))
    }

    fn canonical_tuple(&self) -> Value {
        json!([
            self.cell_id,
            self.kind.as_str(),
            self.source,
            self.execution_count,
            self.outputs_digest
        ])
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Notebook {
    pub cells: Vec<Cell>,
    pub format_version: (u32, u32),
    pub metadata_digest: ContentHash,
}

impl Default for Notebook {
    fn default() -> Self {
        Notebook::new(Vec::new())
    }
}

impl Notebook {
    /// A format 4.5 notebook with empty metadata.
    pub fn new(cells: Vec<Cell>) -> Self {
        Notebook {
            cells,
            format_version: (4, 5),
            metadata_digest: canonical::hash(&json!({})),
        }
    }

    pub fn code_cells(&self) -> impl Iterator<Item = (usize, &Cell)> {
        self.cells.iter().enumerate().filter(|(_, c)| c.is_code())
    }

    pub fn cell(&self, cell_id: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| c.cell_id == cell_id)
    }

    pub fn position(&self, cell_id: &str) -> Option<usize> {
        self.cells.iter().position(|c| c.cell_id == cell_id)
    }

    pub fn canonical_value(&self) -> Value {
        json!({
            "cells": self.cells.iter().map(Cell::canonical_tuple).collect::<Vec<_>>(),
            "format_version": [self.format_version.0, self.format_version.1],
            "metadata_digest": self.metadata_digest,
        })
    }

    pub fn to_canonical_string(&self) -> String {
        canonical::value_to_string(&self.canonical_value())
    }

    /// Rebuilds a notebook from its canonical value, validating invariants.
    pub fn from_canonical_value(value: &Value) -> Result<Self, NotebookError> {
        let malformed = |m: &str| NotebookError::Malformed(m.to_string());
        let obj = value.as_object().ok_or_else(|| malformed("expected object"))?;
        let version = obj
            .get("format_version")
            .and_then(Value::as_array)
            .filter(|v| v.len() == 2)
            .ok_or_else(|| malformed("format_version must be [major, minor]"))?;
        let major = version[0].as_u64().ok_or_else(|| malformed("bad major version"))?;
        let minor = version[1].as_u64().ok_or_else(|| malformed("bad minor version"))?;
        if major != SUPPORTED_MAJOR {
            return Err(NotebookError::UnsupportedVersion(major));
        }
        let metadata_digest = obj
            .get("metadata_digest")
            .and_then(Value::as_str)
            .and_then(|s| ContentHash::parse(s).ok())
            .ok_or_else(|| malformed("metadata_digest must be a content hash"))?;
        let raw_cells = obj
            .get("cells")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed("cells must be an array"))?;
        let mut cells = Vec::with_capacity(raw_cells.len());
        for raw in raw_cells {
            let t = raw
                .as_array()
                .filter(|t| t.len() == 5)
                .ok_or_else(|| malformed("cell must be a 5-tuple"))?;
            let cell_id = t[0].as_str().ok_or_else(|| malformed("cell id"))?.to_string();
            let kind = t[1]
                .as_str()
                .and_then(CellKind::parse)
                .ok_or_else(|| malformed("cell kind"))?;
            let source = t[2].as_str().ok_or_else(|| malformed("cell source"))?.to_string();
            let execution_count = match &t[3] {
                Value::Null => None,
                v => Some(v.as_u64().ok_or_else(|| malformed("execution count"))?),
            };
            let outputs_digest = match &t[4] {
                Value::Null => None,
                v => Some(
                    v.as_str()
                        .and_then(|s| ContentHash::parse(s).ok())
                        .ok_or_else(|| malformed("outputs digest"))?,
                ),
            };
            cells.push(Cell { cell_id, kind, source, execution_count, outputs_digest });
        }
        let nb = Notebook {
            cells,
            format_version: (major as u32, minor as u32),
            metadata_digest,
        };
        nb.validate()?;
        Ok(nb)
    }

    pub fn from_canonical_str(text: &str) -> Result<Self, NotebookError> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| NotebookError::Malformed(format!("invalid JSON: {e}")))?;
        Notebook::from_canonical_value(&value)
    }

    pub fn validate(&self) -> Result<(), NotebookError> {
        let mut seen = HashSet::new();
        for cell in &self.cells {
            if cell.cell_id.is_empty() {
                return Err(NotebookError::Malformed("empty cell id".into()));
            }
            if !seen.insert(cell.cell_id.as_str()) {
                return Err(NotebookError::Malformed(format!("duplicate cell id {:?}", cell.cell_id)));
            }
            if !cell.is_code() && cell.execution_count.is_some() {
                return Err(NotebookError::Malformed(format!(
                    "{} cell {:?} has an execution count",
                    cell.kind.as_str(),
                    cell.cell_id
                )));
            }
        }
        Ok(())
    }

    /// Writes a standard nbformat 4 document. Output digests and the metadata
    /// digest are carried under `metadata.protoml` so that parsing the result
    /// yields an equal notebook.
    pub fn to_ipynb(&self) -> String {
        let cells: Vec<Value> = self
            .cells
            .iter()
            .map(|cell| {
                let mut obj = Map::new();
                obj.insert("cell_type".into(), json!(cell.kind.as_str()));
                obj.insert("id".into(), json!(cell.cell_id));
                let mut meta = Map::new();
                if let Some(d) = &cell.outputs_digest {
                    meta.insert("protoml".into(), json!({ "outputs_digest": d }));
                }
                obj.insert("metadata".into(), Value::Object(meta));
                obj.insert("source".into(), json!(split_source(&cell.source)));
                if cell.is_code() {
                    obj.insert("execution_count".into(), json!(cell.execution_count));
                    obj.insert("outputs".into(), json!([]));
                }
                Value::Object(obj)
            })
            .collect();
        let doc = json!({
            "cells": cells,
            "metadata": { "protoml": { "metadata_digest": self.metadata_digest } },
            "nbformat": self.format_version.0,
            "nbformat_minor": self.format_version.1,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("notebook serializes");
        text.push('\n');
        text
    }
}

/// SHA-256 of the canonical serialization.
pub fn canonical_hash(nb: &Notebook) -> ContentHash {
    ContentHash::of_bytes(nb.to_canonical_string().as_bytes())
}

/// Parses an `.ipynb` document (nbformat 4).
pub fn parse_notebook(bytes: &[u8]) -> Result<Notebook, NotebookError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| NotebookError::Malformed(format!("not UTF-8: {e}")))?;
    let doc: Value = serde_json::from_str(text)
        .map_err(|e| NotebookError::Malformed(format!("invalid JSON: {e}")))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| NotebookError::Malformed("top level is not an object".into()))?;

    let major = obj
        .get("nbformat")
        .and_then(Value::as_u64)
        .ok_or_else(|| NotebookError::Malformed("missing integer nbformat".into()))?;
    if major != SUPPORTED_MAJOR {
        return Err(NotebookError::UnsupportedVersion(major));
    }
    let minor = match obj.get("nbformat_minor") {
        None => 0,
        Some(v) => v
            .as_u64()
            .ok_or_else(|| NotebookError::Malformed("nbformat_minor is not an integer".into()))?,
    };

    let raw_cells = obj
        .get("cells")
        .and_then(Value::as_array)
        .ok_or_else(|| NotebookError::Malformed("missing cells array".into()))?;
    let mut cells = Vec::with_capacity(raw_cells.len());
    for (index, raw) in raw_cells.iter().enumerate() {
        cells.push(parse_cell(index, raw)?);
    }

    let metadata_digest = match obj.get("metadata") {
        None | Some(Value::Null) => canonical::hash(&json!({})),
        Some(Value::Object(meta)) => restored_metadata_digest(meta)
            .unwrap_or_else(|| canonical::hash(&Value::Object(meta.clone()))),
        Some(_) => return Err(NotebookError::Malformed("metadata is not an object".into())),
    };

    let nb = Notebook {
        cells,
        format_version: (major as u32, minor as u32),
        metadata_digest,
    };
    nb.validate()?;
    Ok(nb)
}

fn parse_cell(index: usize, raw: &Value) -> Result<Cell, NotebookError> {
    let malformed = |m: String| NotebookError::Malformed(format!("cell {index}: {m}"));
    let obj = raw.as_object().ok_or_else(|| malformed("not an object".into()))?;
    let kind_str = obj
        .get("cell_type")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed("missing cell_type".into()))?;
    let kind = CellKind::parse(kind_str).ok_or_else(|| malformed(format!("unknown cell_type {kind_str:?}")))?;
    let source = match obj.get("source") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(Value::Array(parts)) => {
            let mut s = String::new();
            for part in parts {
                s.push_str(part.as_str().ok_or_else(|| malformed("source line is not a string".into()))?);
            }
            s
        }
        Some(_) => return Err(malformed("source must be a string or list of strings".into())),
    };
    let source = source.replace("\r\n", "\n");

    let cell_id = match obj.get("id") {
        Some(Value::String(id)) if !id.is_empty() => id.clone(),
        Some(Value::String(_)) => return Err(malformed("empty id".into())),
        None | Some(Value::Null) => synthetic_id(index, &source),
        Some(_) => return Err(malformed("id is not a string".into())),
    };

    let (execution_count, outputs_digest) = if kind == CellKind::Code {
        let count = match obj.get("execution_count") {
            None | Some(Value::Null) => None,
            Some(v) => Some(v.as_u64().ok_or_else(|| malformed("execution_count is not a non-negative integer".into()))?),
        };
        let outputs = match obj.get("outputs") {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::Array(items)) => items.clone(),
            Some(_) => return Err(malformed("outputs is not an array".into())),
        };
        let digest = if outputs.is_empty() {
            restored_outputs_digest(obj.get("metadata"))
        } else {
            Some(canonical::hash(&Value::Array(outputs)))
        };
        (count, digest)
    } else {
        (None, None)
    };

    Ok(Cell { cell_id, kind, source, execution_count, outputs_digest })
}

/// `gen-<index>-<first 8 hex chars of sha256(source)>`.
pub fn synthetic_id(index: usize, source: &str) -> String {
    let digest = ContentHash::of_bytes(source.as_bytes());
    format!("gen-{index}-{}", &digest.as_str()[..8])
}

fn restored_outputs_digest(metadata: Option<&Value>) -> Option<ContentHash> {
    metadata?
        .get("protoml")?
        .get("outputs_digest")?
        .as_str()
        .and_then(|s| ContentHash::parse(s).ok())
}

fn restored_metadata_digest(meta: &Map<String, Value>) -> Option<ContentHash> {
    if meta.len() != 1 {
        return None;
    }
    let inner = meta.get("protoml")?.as_object()?;
    if inner.len() != 1 {
        return None;
    }
    inner
        .get("metadata_digest")?
        .as_str()
        .and_then(|s| ContentHash::parse(s).ok())
}

fn split_source(source: &str) -> Vec<&str> {
    source.split_inclusive('\n').collect()
}
