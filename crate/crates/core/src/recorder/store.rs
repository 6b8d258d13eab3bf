//! On-disk snapshot store.
//!
//! Layout under the repository directory:
//!
//! ```text
//! objects/<node_id>.json   {"header": {...}, "notebook": <canonical notebook>, "schema": "snapshot/1"}
//! manifest.json            {"head_id", "next_seq", "root_id", "schema": "store/1"}
//! comments.json            {"comments": {<node_id>: text}, "schema": "comments/1"}
//! lock                     present while a writer is mutating
//! ```
//!
//! Objects are written before the manifest, so an interrupted record leaves at
//! most an unreferenced object (its `seq` is not below `next_seq`), which is
//! ignored on load. Every mutation takes the lock, reloads state from disk,
//! applies the change and releases the lock.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::diff::{diff_notebooks, NotebookDiff};
use super::tree::{node_id, ExperimentTree, Snapshot};
use crate::canonical;
use crate::hash::ContentHash;
use crate::notebook::{canonical_hash, Notebook, NotebookError};
use crate::repo::{write_atomic, LockError, LockGuard};

pub const STORE_SCHEMA: &str = "store/1";
pub const SNAPSHOT_SCHEMA: &str = "snapshot/1";
pub const COMMENTS_SCHEMA: &str = "comments/1";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store is corrupt: {0}")]
    Corrupt(String),
    #[error("store is locked by another writer ({0})")]
    Locked(PathBuf),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("node prefix {0:?} is ambiguous")]
    AmbiguousNode(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl From<LockError> for StoreError {
    fn from(e: LockError) -> Self {
        match e {
            LockError::Locked(p) => StoreError::Locked(p),
            LockError::Io { path, source } => StoreError::Io { path, source },
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct Manifest {
    schema: String,
    root_id: ContentHash,
    head_id: ContentHash,
    next_seq: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct SnapshotHeader {
    node_id: ContentHash,
    parent_id: Option<ContentHash>,
    content_hash: ContentHash,
    trigger_cell_id: Option<String>,
    created_at: String,
    seq: u64,
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub struct Store {
    dir: PathBuf,
    headers: HashMap<ContentHash, SnapshotHeader>,
    manifest: Option<Manifest>,
    comments: BTreeMap<ContentHash, String>,
    clock: Clock,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("dir", &self.dir).field("nodes", &self.headers.len()).finish()
    }
}

impl Store {
    /// Opens (creating if needed) the store rooted at `dir` and loads it.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Store, StoreError> {
        let dir = dir.into();
        let objects = dir.join("objects");
        fs::create_dir_all(&objects).map_err(io_err(&objects))?;
        let mut store = Store {
            dir,
            headers: HashMap::new(),
            manifest: None,
            comments: BTreeMap::new(),
            clock: Arc::new(Utc::now),
        };
        store.refresh()?;
        Ok(store)
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn object_path(&self, id: &ContentHash) -> PathBuf {
        self.dir.join("objects").join(format!("{id}.json"))
    }

    /// Re-reads manifest, comments and any objects not seen yet.
    pub fn refresh(&mut self) -> Result<(), StoreError> {
        let manifest_path = self.dir.join("manifest.json");
        self.manifest = match fs::read_to_string(&manifest_path) {
            Ok(text) => {
                let m: Manifest = serde_json::from_str(&text)
                    .map_err(|e| StoreError::Corrupt(format!("manifest.json: {e}")))?;
                if m.schema != STORE_SCHEMA {
                    return Err(StoreError::Corrupt(format!("manifest schema {:?}", m.schema)));
                }
                Some(m)
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => None,
            Err(e) => return Err(io_err(&manifest_path)(e)),
        };

        let comments_path = self.dir.join("comments.json");
        self.comments = match fs::read_to_string(&comments_path) {
            Ok(text) => {
                let v: Value = serde_json::from_str(&text)
                    .map_err(|e| StoreError::Corrupt(format!("comments.json: {e}")))?;
                serde_json::from_value(v.get("comments").cloned().unwrap_or(json!({})))
                    .map_err(|e| StoreError::Corrupt(format!("comments.json: {e}")))?
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(io_err(&comments_path)(e)),
        };

        let next_seq = self.manifest.as_ref().map_or(0, |m| m.next_seq);
        let objects = self.dir.join("objects");
        let mut ids = Vec::new();
        for entry in fs::read_dir(&objects).map_err(io_err(&objects))? {
            let entry = entry.map_err(io_err(&objects))?;
            let name = entry.file_name();
            let Some(stem) = name.to_str().and_then(|n| n.strip_suffix(".json")) else { continue };
            let Ok(id) = ContentHash::parse(stem) else { continue };
            ids.push(id);
        }
        for id in ids {
            if !self.headers.contains_key(&id) {
                let (header, _) = self.read_object(&id)?;
                self.headers.insert(id, header);
            }
        }
        self.headers.retain(|_, h| h.seq < next_seq);
        self.tree().validate().map_err(StoreError::Corrupt)?;
        Ok(())
    }

    fn read_object(&self, id: &ContentHash) -> Result<(SnapshotHeader, Notebook), StoreError> {
        let path = self.object_path(id);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let corrupt = |m: String| StoreError::Corrupt(format!("object {id}: {m}"));
        let v: Value = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
        if v.get("schema").and_then(Value::as_str) != Some(SNAPSHOT_SCHEMA) {
            return Err(corrupt("unexpected schema".into()));
        }
        let header: SnapshotHeader =
            serde_json::from_value(v["header"].clone()).map_err(|e| corrupt(e.to_string()))?;
        let nb = Notebook::from_canonical_value(&v["notebook"]).map_err(|e: NotebookError| corrupt(e.to_string()))?;
        if &header.node_id != id {
            return Err(corrupt("file name does not match node id".into()));
        }
        if canonical_hash(&nb) != header.content_hash {
            return Err(corrupt("notebook does not match content hash".into()));
        }
        Ok((header, nb))
    }

    fn snapshot_of(&self, h: &SnapshotHeader) -> Snapshot {
        Snapshot {
            node_id: h.node_id.clone(),
            parent_id: h.parent_id.clone(),
            content_hash: h.content_hash.clone(),
            trigger_cell_id: h.trigger_cell_id.clone(),
            comment: self.comments.get(&h.node_id).cloned(),
            created_at: h.created_at.clone(),
            seq: h.seq,
        }
    }

    /// The tree as of the last refresh.
    pub fn tree(&self) -> ExperimentTree {
        ExperimentTree {
            nodes: self.headers.values().map(|h| (h.node_id.clone(), self.snapshot_of(h))).collect(),
            root_id: self.manifest.as_ref().map(|m| m.root_id.clone()),
            head_id: self.manifest.as_ref().map(|m| m.head_id.clone()),
        }
    }

    pub fn len(&self) -> usize {
        self.headers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.headers.is_empty()
    }

    pub fn head(&self) -> Option<Snapshot> {
        let m = self.manifest.as_ref()?;
        self.headers.get(&m.head_id).map(|h| self.snapshot_of(h))
    }

    pub fn snapshot(&self, id: &ContentHash) -> Result<Snapshot, StoreError> {
        self.headers
            .get(id)
            .map(|h| self.snapshot_of(h))
            .ok_or_else(|| StoreError::UnknownNode(id.to_string()))
    }

    /// Full id from an id or a unique prefix of at least four characters.
    pub fn resolve(&self, id_or_prefix: &str) -> Result<ContentHash, StoreError> {
        if let Ok(id) = ContentHash::parse(id_or_prefix) {
            return if self.headers.contains_key(&id) { Ok(id) } else { Err(StoreError::UnknownNode(id_or_prefix.into())) };
        }
        if id_or_prefix.len() < 4 {
            return Err(StoreError::UnknownNode(id_or_prefix.into()));
        }
        let matches: Vec<&ContentHash> = self.headers.keys().filter(|k| k.as_str().starts_with(id_or_prefix)).collect();
        match matches.as_slice() {
            [one] => Ok((*one).clone()),
            [] => Err(StoreError::UnknownNode(id_or_prefix.into())),
            _ => Err(StoreError::AmbiguousNode(id_or_prefix.into())),
        }
    }

    /// The notebook stored for a node, exactly as recorded.
    pub fn notebook(&self, id: &ContentHash) -> Result<Notebook, StoreError> {
        if !self.headers.contains_key(id) {
            return Err(StoreError::UnknownNode(id.to_string()));
        }
        Ok(self.read_object(id)?.1)
    }

    pub fn diff(&self, a: &ContentHash, b: &ContentHash) -> Result<NotebookDiff, StoreError> {
        let old = self.notebook(a)?;
        let new = self.notebook(b)?;
        Ok(diff_notebooks(&old, &new))
    }

    fn transaction<T>(&mut self, f: impl FnOnce(&mut Store) -> Result<T, StoreError>) -> Result<T, StoreError> {
        let _guard = LockGuard::acquire(&self.dir)?;
        self.refresh()?;
        f(self)
    }

    /// Records a notebook version as a child of head. Identical content to head
    /// is a no-op returning head. Recording while head has children starts a
    /// new branch.
    pub fn record(
        &mut self,
        nb: &Notebook,
        trigger_cell_id: Option<&str>,
        comment: Option<&str>,
    ) -> Result<Snapshot, StoreError> {
        self.transaction(|store| {
            let content_hash = canonical_hash(nb);
            if let Some(head) = store.head() {
                if head.content_hash == content_hash {
                    return Ok(head);
                }
            }
            let parent = store.manifest.as_ref().map(|m| m.head_id.clone());
            let seq = store.manifest.as_ref().map_or(0, |m| m.next_seq);
            let id = node_id(&content_hash, parent.as_ref(), seq);
            let header = SnapshotHeader {
                node_id: id.clone(),
                parent_id: parent,
                content_hash,
                trigger_cell_id: trigger_cell_id.map(str::to_string),
                created_at: (store.clock)().to_rfc3339_opts(SecondsFormat::Secs, true),
                seq,
            };
            let object = json!({
                "schema": SNAPSHOT_SCHEMA,
                "header": header,
                "notebook": nb.canonical_value(),
            });
            let path = store.object_path(&id);
            write_atomic(&path, canonical::value_to_string(&object).as_bytes()).map_err(io_err(&path))?;
            if let Some(text) = comment {
                store.comments.insert(id.clone(), text.to_string());
                store.write_comments()?;
            }
            let manifest = Manifest {
                schema: STORE_SCHEMA.into(),
                root_id: store.manifest.as_ref().map_or_else(|| id.clone(), |m| m.root_id.clone()),
                head_id: id.clone(),
                next_seq: seq + 1,
            };
            store.write_manifest(manifest)?;
            store.headers.insert(id.clone(), header);
            store.snapshot(&id)
        })
    }

    /// Moves head to `id` and returns its notebook.
    pub fn checkout(&mut self, id: &ContentHash) -> Result<Notebook, StoreError> {
        self.transaction(|store| {
            let nb = store.notebook(id)?;
            let mut manifest = store.manifest.clone().ok_or_else(|| StoreError::UnknownNode(id.to_string()))?;
            if &manifest.head_id != id {
                manifest.head_id = id.clone();
                store.write_manifest(manifest)?;
            }
            Ok(nb)
        })
    }

    /// Sets (or replaces) the comment of a node. Node identity is unaffected.
    pub fn annotate(&mut self, id: &ContentHash, comment: &str) -> Result<Snapshot, StoreError> {
        self.transaction(|store| {
            if !store.headers.contains_key(id) {
                return Err(StoreError::UnknownNode(id.to_string()));
            }
            store.comments.insert(id.clone(), comment.to_string());
            store.write_comments()?;
            store.snapshot(id)
        })
    }

    fn write_manifest(&mut self, manifest: Manifest) -> Result<(), StoreError> {
        let path = self.dir.join("manifest.json");
        write_atomic(&path, canonical::to_string(&manifest).as_bytes()).map_err(io_err(&path))?;
        self.manifest = Some(manifest);
        Ok(())
    }

    fn write_comments(&self) -> Result<(), StoreError> {
        let path = self.dir.join("comments.json");
        let doc = json!({ "schema": COMMENTS_SCHEMA, "comments": self.comments });
        write_atomic(&path, canonical::value_to_string(&doc).as_bytes()).map_err(io_err(&path))
    }
}
