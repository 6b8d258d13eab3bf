//! Analysis, history and knowledge-reuse toolkit for notebook-based ML prototypes.

pub mod canonical;
pub mod cardgen;
pub mod dataflow;
pub mod hash;
pub mod knowledge;
pub mod notebook;
pub mod recommender;
pub mod recorder;
pub mod repo;
pub mod reviewer;
pub mod service;
pub mod text;

pub use hash::ContentHash;
pub use notebook::{canonical_hash, parse_notebook, Cell, CellKind, Notebook, NotebookError};
