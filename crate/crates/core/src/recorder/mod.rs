//! Experiment tree of notebook snapshots.

pub mod diff;
pub mod store;
pub mod tree;
pub mod watch;

pub use diff::{diff_notebooks, ChangeKind, DiffEntry, LineChange, LineOp, NotebookDiff};
pub use store::{Store, StoreError};
pub use tree::{ExperimentTree, Snapshot};
pub use watch::{execution_trigger, WatchEvent, Watcher};
