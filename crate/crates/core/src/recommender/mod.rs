//! TF-IDF retrieval of similar cells and notebooks.
//!
//! Documents are code cells. Tokens are identifier sub-parts (snake_case and
//! camelCase split, lowercased, single characters dropped); keywords, literals
//! and comments never contribute. Scoring is an exact brute-force cosine scan.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::canonical;
use crate::dataflow::lexer::{tokenize as lex, TokenKind};
use crate::dataflow::ExcludedNames;
use crate::notebook::{parse_notebook, Notebook};
use crate::repo::write_atomic;
use crate::text::split_identifier;

pub const INDEX_SCHEMA: &str = "index/1";
pub const RECOMMENDATIONS_SCHEMA: &str = "recommendations/1";

/// Token multiset.
pub type TokenBag = BTreeMap<String, u32>;

pub fn tokenize(source: &str) -> TokenBag {
    let names = ExcludedNames::shipped();
    let mut bag = TokenBag::new();
    for line in lex(source) {
        for tok in line.tokens.iter().filter(|t| t.kind == TokenKind::Name) {
            if names.is_keyword(tok.text) {
                continue;
            }
            for part in split_identifier(tok.text) {
                if part.chars().count() > 1 {
                    *bag.entry(part).or_insert(0) += 1;
                }
            }
        }
    }
    bag
}

pub fn idf(n_docs: usize, df: usize) -> f64 {
    ((1 + n_docs) as f64 / (1 + df) as f64).ln() + 1.0
}

#[derive(Debug, thiserror::Error)]
pub enum RecommendError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("no notebooks found under {0}")]
    NoNotebooksFound(PathBuf),
    #[error("invalid index file: {0}")]
    InvalidIndex(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellRef {
    pub notebook: String,
    pub cell_id: String,
}

/// Unit-length sparse vector, entries sorted by token id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseVector {
    pub entries: Vec<(u32, f64)>,
    /// Norm before normalization; zero for empty documents.
    pub norm: f64,
}

impl SparseVector {
    fn from_weights(mut entries: Vec<(u32, f64)>) -> SparseVector {
        entries.sort_by_key(|e| e.0);
        let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            for e in &mut entries {
                e.1 /= norm;
            }
        }
        SparseVector { entries, norm }
    }

    /// Dot product with another id-sorted entry list.
    fn dot(&self, other: &[(u32, f64)]) -> f64 {
        let (mut i, mut j, mut sum) = (0, 0, 0.0);
        while i < self.entries.len() && j < other.len() {
            match self.entries[i].0.cmp(&other[j].0) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    sum += self.entries[i].1 * other[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        sum
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellVector {
    pub source_ref: CellRef,
    pub token_count: u32,
    pub vector: SparseVector,
}

#[derive(Clone, Debug)]
pub struct IndexedCell {
    pub source_ref: CellRef,
    pub bag: TokenBag,
}

/// Immutable after build.
#[derive(Clone, Debug)]
pub struct VectorIndex {
    pub built_at: String,
    pub n_docs: usize,
    /// Sorted vocabulary; position is the token id.
    pub vocabulary: Vec<String>,
    pub df: Vec<usize>,
    pub notebooks: Vec<String>,
    cells: Vec<IndexedCell>,
    cell_vectors: Vec<CellVector>,
    notebook_vectors: Vec<SparseVector>,
    token_ids: HashMap<String, u32>,
    /// Per token id, `(cell position, weight)` in cell order.
    postings: Vec<Vec<(u32, f64)>>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Cell(CellRef),
    Notebook { notebook: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub rank: usize,
    pub score: f64,
    #[serde(flatten)]
    pub target: Target,
}

pub fn recommendations_json(kind: &str, recs: &[Recommendation]) -> Value {
    json!({ "schema": RECOMMENDATIONS_SCHEMA, "level": kind, "results": recs })
}

fn rank(mut scored: Vec<(f64, Target)>, k: usize) -> Vec<Recommendation> {
    scored.retain(|(s, _)| *s > 0.0);
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then_with(|| a.1.cmp(&b.1)));
    scored
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (score, target))| Recommendation { rank: i + 1, score: score.clamp(0.0, 1.0), target })
        .collect()
}

impl VectorIndex {
    /// Builds over `(path, notebook)` pairs; order of the input does not matter.
    pub fn build(corpus: Vec<(String, Notebook)>, built_at: impl Into<String>) -> Result<VectorIndex, RecommendError> {
        if corpus.is_empty() {
            return Err(RecommendError::EmptyCorpus);
        }
        let mut corpus = corpus;
        corpus.sort_by(|a, b| a.0.cmp(&b.0));
        let mut cells = Vec::new();
        for (path, nb) in &corpus {
            for (_, cell) in nb.code_cells() {
                cells.push(IndexedCell {
                    source_ref: CellRef { notebook: path.clone(), cell_id: cell.cell_id.clone() },
                    bag: tokenize(&cell.source),
                });
            }
        }
        let notebooks = corpus.into_iter().map(|(p, _)| p).collect();
        Ok(VectorIndex::from_parts(built_at.into(), notebooks, cells))
    }

    fn from_parts(built_at: String, notebooks: Vec<String>, cells: Vec<IndexedCell>) -> VectorIndex {
        let mut df_map: BTreeMap<&str, usize> = BTreeMap::new();
        for c in &cells {
            for token in c.bag.keys() {
                *df_map.entry(token).or_insert(0) += 1;
            }
        }
        let vocabulary: Vec<String> = df_map.keys().map(|t| t.to_string()).collect();
        let df: Vec<usize> = df_map.values().copied().collect();
        let token_ids: HashMap<String, u32> = vocabulary.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        let n_docs = cells.len();
        let mut index = VectorIndex {
            built_at,
            n_docs,
            vocabulary,
            df,
            notebooks,
            cells: Vec::new(),
            cell_vectors: Vec::new(),
            notebook_vectors: Vec::new(),
            token_ids,
            postings: Vec::new(),
        };
        index.cell_vectors = cells
            .iter()
            .map(|c| CellVector {
                source_ref: c.source_ref.clone(),
                token_count: c.bag.values().sum(),
                vector: SparseVector::from_weights(index.weights_known(&c.bag)),
            })
            .collect();
        let mut members: HashMap<&str, Vec<&CellVector>> = HashMap::new();
        for c in &index.cell_vectors {
            members.entry(c.source_ref.notebook.as_str()).or_default().push(c);
        }
        let notebook_vectors = index
            .notebooks
            .iter()
            .map(|path| {
                let cells = members.get(path.as_str()).map(Vec::as_slice).unwrap_or_default();
                aggregate(cells.iter().map(|c| (c.token_count, &c.vector)))
            })
            .collect();
        index.notebook_vectors = notebook_vectors;
        let mut postings = vec![Vec::new(); index.vocabulary.len()];
        for (pos, c) in index.cell_vectors.iter().enumerate() {
            for &(t, w) in &c.vector.entries {
                postings[t as usize].push((pos as u32, w));
            }
        }
        index.postings = postings;
        index.cells = cells;
        index
    }

    fn idf_of(&self, id: u32) -> f64 {
        idf(self.n_docs, self.df[id as usize])
    }

    /// TF-IDF weights of a bag whose tokens are all in the vocabulary.
    fn weights_known(&self, bag: &TokenBag) -> Vec<(u32, f64)> {
        let total: u32 = bag.values().sum();
        bag.iter()
            .map(|(t, &c)| {
                let id = self.token_ids[t];
                (id, f64::from(c) / f64::from(total) * self.idf_of(id))
            })
            .collect()
    }

    /// Query weights for known tokens plus the squared norm contributed by
    /// unseen ones.
    fn query_weights(&self, bag: &TokenBag) -> (BTreeMap<u32, f64>, f64) {
        let total: u32 = bag.values().sum();
        let unseen_idf = ((1 + self.n_docs) as f64).ln() + 1.0;
        let mut known = BTreeMap::new();
        let mut unseen_sq = 0.0;
        for (t, &c) in bag {
            let tf = f64::from(c) / f64::from(total);
            match self.token_ids.get(t) {
                Some(&id) => {
                    known.insert(id, tf * self.idf_of(id));
                }
                None => unseen_sq += (tf * unseen_idf).powi(2),
            }
        }
        (known, unseen_sq)
    }

    /// Unit query entries sorted by token id.
    fn normalized_query(&self, weights: BTreeMap<u32, f64>, unseen_sq: f64) -> Option<Vec<(u32, f64)>> {
        let norm = (weights.values().map(|w| w * w).sum::<f64>() + unseen_sq).sqrt();
        (norm > 0.0).then(|| weights.into_iter().map(|(t, w)| (t, w / norm)).collect())
    }

    pub fn cell_vectors(&self) -> &[CellVector] {
        &self.cell_vectors
    }

    pub fn cells(&self) -> &[IndexedCell] {
        &self.cells
    }

    pub fn notebook_vector(&self, path: &str) -> Option<&SparseVector> {
        self.notebooks.iter().position(|p| p == path).map(|i| &self.notebook_vectors[i])
    }

    pub fn token_id(&self, token: &str) -> Option<u32> {
        self.token_ids.get(token).copied()
    }

    /// Cells most similar to `query_source`.
    pub fn recommend_cells(&self, query_source: &str, k: usize, exclude: Option<&CellRef>) -> Vec<Recommendation> {
        let (weights, unseen) = self.query_weights(&tokenize(query_source));
        let Some(query) = self.normalized_query(weights, unseen) else { return Vec::new() };
        // Accumulating in token-id order gives every cell the same sum as a direct dot product.
        let mut scores = vec![0.0; self.cell_vectors.len()];
        for &(t, q) in &query {
            for &(pos, w) in &self.postings[t as usize] {
                scores[pos as usize] += w * q;
            }
        }
        let scored = scores
            .into_iter()
            .zip(&self.cell_vectors)
            .filter(|(s, c)| *s > 0.0 && Some(&c.source_ref) != exclude)
            .map(|(s, c)| (s, Target::Cell(c.source_ref.clone())))
            .collect();
        rank(scored, k)
    }

    /// Notebooks most similar to `query`, aggregated like indexed notebooks.
    pub fn recommend_notebooks(&self, query: &Notebook, k: usize, exclude_path: Option<&str>) -> Vec<Recommendation> {
        let unseen_idf = ((1 + self.n_docs) as f64).ln() + 1.0;
        let mut weighted: BTreeMap<u32, f64> = BTreeMap::new();
        let mut unseen: BTreeMap<String, f64> = BTreeMap::new();
        let mut total_count = 0u32;
        for (_, cell) in query.code_cells() {
            let bag = tokenize(&cell.source);
            let count: u32 = bag.values().sum();
            if count == 0 {
                continue;
            }
            total_count += count;
            // Cell vectors as indexed: unit length, then weighted by token count.
            let (known, unseen_sq) = self.query_weights(&bag);
            let norm = (known.values().map(|w| w * w).sum::<f64>() + unseen_sq).sqrt();
            for (id, w) in known {
                *weighted.entry(id).or_insert(0.0) += f64::from(count) * w / norm;
            }
            for (t, &c) in bag.iter().filter(|(t, _)| !self.token_ids.contains_key(*t)) {
                let w = f64::from(c) / f64::from(count) * unseen_idf;
                *unseen.entry(t.clone()).or_insert(0.0) += f64::from(count) * w / norm;
            }
        }
        if total_count == 0 {
            return Vec::new();
        }
        let unseen_sq = unseen.values().map(|w| w * w).sum();
        let Some(q) = self.normalized_query(weighted, unseen_sq) else { return Vec::new() };
        let scored = self
            .notebooks
            .iter()
            .zip(&self.notebook_vectors)
            .filter(|(p, _)| Some(p.as_str()) != exclude_path)
            .map(|(p, v)| (v.dot(&q), Target::Notebook { notebook: p.clone() }))
            .collect();
        rank(scored, k)
    }

    /// Persisted form: raw token counts per cell; weights are recomputed on load.
    pub fn to_json_value(&self) -> Value {
        let cells: Vec<Value> = self
            .cells
            .iter()
            .map(|c| json!({ "notebook": c.source_ref.notebook, "cell_id": c.source_ref.cell_id, "tokens": c.bag }))
            .collect();
        json!({
            "schema": INDEX_SCHEMA,
            "built_at": self.built_at,
            "n_docs": self.n_docs,
            "notebooks": self.notebooks,
            "cells": cells,
        })
    }

    pub fn to_canonical_string(&self) -> String {
        canonical::value_to_string(&self.to_json_value())
    }

    pub fn from_json_str(text: &str) -> Result<VectorIndex, RecommendError> {
        #[derive(Deserialize)]
        struct CellDoc {
            notebook: String,
            cell_id: String,
            tokens: TokenBag,
        }
        #[derive(Deserialize)]
        struct IndexDoc {
            schema: String,
            built_at: String,
            n_docs: usize,
            notebooks: Vec<String>,
            cells: Vec<CellDoc>,
        }
        let doc: IndexDoc = serde_json::from_str(text).map_err(|e| RecommendError::InvalidIndex(e.to_string()))?;
        if doc.schema != INDEX_SCHEMA {
            return Err(RecommendError::InvalidIndex(format!("unexpected schema {:?}", doc.schema)));
        }
        if doc.n_docs != doc.cells.len() {
            return Err(RecommendError::InvalidIndex("n_docs does not match the cell list".into()));
        }
        if doc.cells.iter().any(|c| c.tokens.values().any(|&n| n == 0)) {
            return Err(RecommendError::InvalidIndex("token counts must be positive".into()));
        }
        let cells = doc
            .cells
            .into_iter()
            .map(|c| IndexedCell { source_ref: CellRef { notebook: c.notebook, cell_id: c.cell_id }, bag: c.tokens })
            .collect();
        Ok(VectorIndex::from_parts(doc.built_at, doc.notebooks, cells))
    }

    pub fn save(&self, path: &Path) -> Result<(), RecommendError> {
        write_atomic(path, self.to_canonical_string().as_bytes())
            .map_err(|source| RecommendError::Io { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<VectorIndex, RecommendError> {
        let text = fs::read_to_string(path).map_err(|source| RecommendError::Io { path: path.to_path_buf(), source })?;
        VectorIndex::from_json_str(&text)
    }
}

/// Token-count-weighted mean of unit cell vectors, renormalized.
fn aggregate<'a>(members: impl Iterator<Item = (u32, &'a SparseVector)>) -> SparseVector {
    let mut sum: BTreeMap<u32, f64> = BTreeMap::new();
    for (count, v) in members {
        for (t, w) in &v.entries {
            *sum.entry(*t).or_insert(0.0) += f64::from(count) * w;
        }
    }
    SparseVector::from_weights(sum.into_iter().collect())
}

#[derive(Debug)]
pub struct Ingested {
    pub index: VectorIndex,
    /// Files that could not be read or parsed.
    pub skipped: Vec<PathBuf>,
}

/// Indexes every `*.ipynb` under `root` (hidden directories such as
/// `.ipynb_checkpoints` are skipped) and writes the index to `index_path`.
pub fn ingest_corpus(root: &Path, index_path: Option<&Path>, built_at: &str) -> Result<Ingested, RecommendError> {
    let mut corpus = Vec::new();
    let mut skipped = Vec::new();
    let walker = walkdir::WalkDir::new(root).sort_by_file_name().into_iter().filter_entry(|e| {
        e.depth() == 0 || !e.file_name().to_str().is_some_and(|n| n.starts_with('.'))
    });
    for entry in walker {
        let entry = entry.map_err(|e| RecommendError::Io {
            path: e.path().map_or_else(|| root.to_path_buf(), Path::to_path_buf),
            source: e.into_io_error().unwrap_or_else(|| io::Error::other("walk failed")),
        })?;
        let path = entry.path();
        if !entry.file_type().is_file() || path.extension().and_then(|e| e.to_str()) != Some("ipynb") {
            continue;
        }
        let parsed = fs::read(path).ok().and_then(|b| parse_notebook(&b).ok());
        match parsed {
            Some(nb) => {
                let rel = path.strip_prefix(root).unwrap_or(path);
                let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
                corpus.push((key, nb));
            }
            None => skipped.push(path.to_path_buf()),
        }
    }
    if corpus.is_empty() {
        return Err(RecommendError::NoNotebooksFound(root.to_path_buf()));
    }
    let index = VectorIndex::build(corpus, built_at)?;
    if let Some(p) = index_path {
        index.save(p)?;
    }
    Ok(Ingested { index, skipped })
}
