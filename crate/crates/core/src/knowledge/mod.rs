//! Catalog of knowledge sources, their suitability scores and trace links to
//! notebook cells or snapshots.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::canonical;
use crate::hash::ContentHash;
use crate::repo::{write_atomic, LockError, LockGuard};
use crate::reviewer::{parse_weight, Weight};

pub const KNOWLEDGE_SCHEMA: &str = "knowledge/1";
pub const WEIGHTS_SCHEMA: &str = "weights/1";
pub const KNOWLEDGE_FILE: &str = "knowledge.json";

const SHIPPED_WEIGHTS: &str = include_str!("../../data/suitability-weights.json");

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Paper,
    Blog,
    Repo,
    Forum,
    Notebook,
    Other,
}

impl SourceKind {
    pub const ALL: [SourceKind; 6] =
        [SourceKind::Paper, SourceKind::Blog, SourceKind::Repo, SourceKind::Forum, SourceKind::Notebook, SourceKind::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Paper => "paper",
            SourceKind::Blog => "blog",
            SourceKind::Repo => "repo",
            SourceKind::Forum => "forum",
            SourceKind::Notebook => "notebook",
            SourceKind::Other => "other",
        }
    }
}

impl FromStr for SourceKind {
    type Err = KnowledgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SourceKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| KnowledgeError::InvalidValue(format!("unknown source kind {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    HasCode,
    AuthorKnown,
    StandardBenchmark,
    PeerReviewed,
    Recent,
}

impl Flag {
    pub const ALL: [Flag; 5] = [Flag::HasCode, Flag::AuthorKnown, Flag::StandardBenchmark, Flag::PeerReviewed, Flag::Recent];

    pub fn as_str(self) -> &'static str {
        match self {
            Flag::HasCode => "has_code",
            Flag::AuthorKnown => "author_known",
            Flag::StandardBenchmark => "standard_benchmark",
            Flag::PeerReviewed => "peer_reviewed",
            Flag::Recent => "recent",
        }
    }
}

impl FromStr for Flag {
    type Err = KnowledgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Flag::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| KnowledgeError::InvalidValue(format!("unknown flag {s:?}")))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum KnowledgeError {
    #[error("source id {0:?} already exists")]
    DuplicateId(String),
    #[error("unknown source {0:?}")]
    UnknownSource(String),
    #[error("dangling link: {0}")]
    DanglingLink(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("{0}")]
    InvalidValue(String),
    #[error("invalid knowledge file: {0}")]
    Corrupt(String),
    #[error("knowledge catalog is locked by another writer ({0})")]
    Locked(PathBuf),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl From<LockError> for KnowledgeError {
    fn from(e: LockError) -> Self {
        match e {
            LockError::Locked(p) => KnowledgeError::Locked(p),
            LockError::Io { path, source } => KnowledgeError::Io { path, source },
        }
    }
}

pub fn is_valid_slug(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeSource {
    pub source_id: String,
    pub kind: SourceKind,
    pub title: String,
    pub url: Option<String>,
    pub author: Option<String>,
    pub added_at: String,
    /// Every flag has an entry.
    pub flags: BTreeMap<Flag, bool>,
    pub notes: String,
}

impl KnowledgeSource {
    pub fn new(source_id: impl Into<String>, kind: SourceKind, title: impl Into<String>) -> KnowledgeSource {
        KnowledgeSource {
            source_id: source_id.into(),
            kind,
            title: title.into(),
            url: None,
            author: None,
            added_at: String::new(),
            flags: Flag::ALL.into_iter().map(|f| (f, false)).collect(),
            notes: String::new(),
        }
    }

    pub fn with_flag(mut self, flag: Flag, on: bool) -> Self {
        self.flags.insert(flag, on);
        self
    }

    pub fn flag(&self, flag: Flag) -> bool {
        self.flags.get(&flag).copied().unwrap_or(false)
    }
}

/// What a trace link points at.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LinkTarget {
    Cell { notebook_path: String, cell_id: String },
    Snapshot { node_id: ContentHash },
}

impl fmt::Display for LinkTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinkTarget::Cell { notebook_path, cell_id } => write!(f, "{notebook_path}#{cell_id}"),
            LinkTarget::Snapshot { node_id } => write!(f, "snapshot:{node_id}"),
        }
    }
}

impl FromStr for LinkTarget {
    type Err = KnowledgeError;

    /// `snapshot:<node id>` or `<notebook path>#<cell id>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(id) = s.strip_prefix("snapshot:") {
            let node_id = ContentHash::parse(id)
                .map_err(|_| KnowledgeError::InvalidValue(format!("invalid snapshot id {id:?}")))?;
            return Ok(LinkTarget::Snapshot { node_id });
        }
        match s.rsplit_once('#') {
            Some((path, cell)) if !path.is_empty() && !cell.is_empty() => {
                Ok(LinkTarget::Cell { notebook_path: path.to_string(), cell_id: cell.to_string() })
            }
            _ => Err(KnowledgeError::InvalidValue(format!(
                "invalid link target {s:?}; expected <notebook>#<cell> or snapshot:<node>"
            ))),
        }
    }
}

impl Serialize for LinkTarget {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            LinkTarget::Cell { notebook_path, cell_id } => {
                serde_json::json!({ "notebook_path": notebook_path, "cell_id": cell_id }).serialize(s)
            }
            LinkTarget::Snapshot { node_id } => serde_json::json!({ "node_id": node_id }).serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for LinkTarget {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            notebook_path: Option<String>,
            cell_id: Option<String>,
            node_id: Option<ContentHash>,
        }
        let raw = Raw::deserialize(d)?;
        match raw {
            Raw { notebook_path: Some(notebook_path), cell_id: Some(cell_id), node_id: None } => {
                Ok(LinkTarget::Cell { notebook_path, cell_id })
            }
            Raw { notebook_path: None, cell_id: None, node_id: Some(node_id) } => Ok(LinkTarget::Snapshot { node_id }),
            _ => Err(serde::de::Error::custom("target needs notebook_path and cell_id, or node_id")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceLink {
    pub source_id: String,
    pub target: LinkTarget,
    pub rationale: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeCatalog {
    /// Sorted by source_id.
    pub sources: Vec<KnowledgeSource>,
    /// Sorted by (source_id, target).
    pub links: Vec<TraceLink>,
}

impl KnowledgeCatalog {
    pub fn source(&self, source_id: &str) -> Option<&KnowledgeSource> {
        self.sources.iter().find(|s| s.source_id == source_id)
    }

    pub fn add_source(&mut self, source: KnowledgeSource) -> Result<(), KnowledgeError> {
        if !is_valid_slug(&source.source_id) {
            return Err(KnowledgeError::InvalidValue(format!(
                "source id {:?} must match [a-z0-9-]+",
                source.source_id
            )));
        }
        if source.title.trim().is_empty() {
            return Err(KnowledgeError::InvalidValue("title must not be empty".into()));
        }
        if self.source(&source.source_id).is_some() {
            return Err(KnowledgeError::DuplicateId(source.source_id));
        }
        let mut source = source;
        for f in Flag::ALL {
            source.flags.entry(f).or_insert(false);
        }
        let at = self.sources.partition_point(|s| s.source_id < source.source_id);
        self.sources.insert(at, source);
        Ok(())
    }

    /// Removes a source that no link refers to.
    pub fn remove_source(&mut self, source_id: &str) -> Result<KnowledgeSource, KnowledgeError> {
        let pos = self
            .sources
            .iter()
            .position(|s| s.source_id == source_id)
            .ok_or_else(|| KnowledgeError::UnknownSource(source_id.to_string()))?;
        let linked = self.links.iter().filter(|l| l.source_id == source_id).count();
        if linked > 0 {
            return Err(KnowledgeError::DanglingLink(format!("{source_id} is still referenced by {linked} link(s)")));
        }
        Ok(self.sources.remove(pos))
    }

    pub fn list_sources(&self, kind: Option<SourceKind>, flag: Option<Flag>) -> Vec<&KnowledgeSource> {
        self.sources
            .iter()
            .filter(|s| kind.is_none_or(|k| s.kind == k))
            .filter(|s| flag.is_none_or(|f| s.flag(f)))
            .collect()
    }

    /// Adds a link, or replaces the rationale of an identical one.
    pub fn link(&mut self, link: TraceLink) -> Result<(), KnowledgeError> {
        if self.source(&link.source_id).is_none() {
            return Err(KnowledgeError::UnknownSource(link.source_id));
        }
        match self.links.iter_mut().find(|l| l.source_id == link.source_id && l.target == link.target) {
            Some(existing) => existing.rationale = link.rationale,
            None => {
                let key = (&link.source_id, &link.target);
                let at = self.links.partition_point(|l| (&l.source_id, &l.target) < key);
                self.links.insert(at, link);
            }
        }
        Ok(())
    }

    pub fn unlink(&mut self, source_id: &str, target: &LinkTarget) -> Result<TraceLink, KnowledgeError> {
        let pos = self
            .links
            .iter()
            .position(|l| l.source_id == source_id && &l.target == target)
            .ok_or_else(|| KnowledgeError::DanglingLink(format!("no link from {source_id} to {target}")))?;
        Ok(self.links.remove(pos))
    }

    /// Every link to `target` with its source, sorted by source id.
    pub fn sources_for(&self, target: &LinkTarget) -> Vec<(&KnowledgeSource, &TraceLink)> {
        self.links
            .iter()
            .filter(|l| &l.target == target)
            .filter_map(|l| self.source(&l.source_id).map(|s| (s, l)))
            .collect()
    }

    /// Every link refers to an existing source, ids are unique and valid, and
    /// both lists are sorted.
    pub fn check_integrity(&self) -> Result<(), String> {
        for pair in self.sources.windows(2) {
            if pair[0].source_id >= pair[1].source_id {
                return Err(format!("sources not strictly sorted at {}", pair[1].source_id));
            }
        }
        for s in &self.sources {
            if !is_valid_slug(&s.source_id) {
                return Err(format!("invalid source id {:?}", s.source_id));
            }
        }
        for pair in self.links.windows(2) {
            if (&pair[0].source_id, &pair[0].target) >= (&pair[1].source_id, &pair[1].target) {
                return Err("links not strictly sorted".into());
            }
        }
        for l in &self.links {
            if self.source(&l.source_id).is_none() {
                return Err(format!("link to unknown source {}", l.source_id));
            }
        }
        Ok(())
    }

    pub fn to_json_value(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("catalog serializes");
        v["schema"] = KNOWLEDGE_SCHEMA.into();
        v
    }

    pub fn to_canonical_string(&self) -> String {
        canonical::value_to_string(&self.to_json_value())
    }

    pub fn parse(text: &str) -> Result<KnowledgeCatalog, KnowledgeError> {
        let v: Value = serde_json::from_str(text).map_err(|e| KnowledgeError::Corrupt(e.to_string()))?;
        if v.get("schema").and_then(Value::as_str) != Some(KNOWLEDGE_SCHEMA) {
            return Err(KnowledgeError::Corrupt(format!("expected schema {KNOWLEDGE_SCHEMA:?}")));
        }
        let mut catalog: KnowledgeCatalog =
            serde_json::from_value(v).map_err(|e| KnowledgeError::Corrupt(e.to_string()))?;
        for s in &mut catalog.sources {
            for f in Flag::ALL {
                s.flags.entry(f).or_insert(false);
            }
        }
        catalog.check_integrity().map_err(KnowledgeError::Corrupt)?;
        Ok(catalog)
    }
}

/// Flag weights; non-negative and summing to one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuitabilityWeights(BTreeMap<Flag, Weight>);

impl SuitabilityWeights {
    pub fn new(weights: BTreeMap<Flag, Weight>) -> Result<SuitabilityWeights, KnowledgeError> {
        let zero = Ratio::from_integer(0);
        if let Some((f, _)) = weights.iter().find(|(_, w)| **w < zero) {
            return Err(KnowledgeError::InvalidWeights(format!("{} is negative", f.as_str())));
        }
        let sum: Weight = weights.values().copied().sum();
        let off = (sum - Ratio::from_integer(1)).abs();
        if off > Ratio::new(1, 1_000_000_000) {
            return Err(KnowledgeError::InvalidWeights(format!(
                "weights sum to {}, expected 1",
                sum.to_f64().unwrap_or(f64::NAN)
            )));
        }
        Ok(SuitabilityWeights(weights))
    }

    pub fn shipped() -> SuitabilityWeights {
        SuitabilityWeights::parse(SHIPPED_WEIGHTS).expect("shipped weights are valid")
    }

    pub fn parse(text: &str) -> Result<SuitabilityWeights, KnowledgeError> {
        let v: Value = serde_json::from_str(text).map_err(|e| KnowledgeError::InvalidWeights(e.to_string()))?;
        if v.get("schema").and_then(Value::as_str) != Some(WEIGHTS_SCHEMA) {
            return Err(KnowledgeError::InvalidWeights(format!("expected schema {WEIGHTS_SCHEMA:?}")));
        }
        let obj = v
            .get("weights")
            .and_then(Value::as_object)
            .ok_or_else(|| KnowledgeError::InvalidWeights("missing weights object".into()))?;
        let mut weights = BTreeMap::new();
        for (k, w) in obj {
            let flag: Flag = k.parse().map_err(|_| KnowledgeError::InvalidWeights(format!("unknown flag {k:?}")))?;
            let w = match w {
                Value::Number(n) => parse_weight(&n.to_string()),
                Value::String(s) => parse_weight(s),
                _ => None,
            }
            .ok_or_else(|| KnowledgeError::InvalidWeights(format!("{k} is not a number")))?;
            weights.insert(flag, w);
        }
        SuitabilityWeights::new(weights)
    }

    pub fn load(path: &Path) -> Result<SuitabilityWeights, KnowledgeError> {
        let text = fs::read_to_string(path).map_err(|source| KnowledgeError::Io { path: path.to_path_buf(), source })?;
        SuitabilityWeights::parse(&text)
    }

    pub fn get(&self, flag: Flag) -> Weight {
        self.0.get(&flag).copied().unwrap_or_else(|| Ratio::from_integer(0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuitabilityScore {
    pub value: f64,
    /// Contribution of each flag that is set.
    pub breakdown: BTreeMap<Flag, f64>,
}

pub fn score_source(src: &KnowledgeSource, weights: &SuitabilityWeights) -> SuitabilityScore {
    let mut exact: Weight = Ratio::from_integer(0);
    let mut breakdown = BTreeMap::new();
    for flag in Flag::ALL.into_iter().filter(|f| src.flag(*f)) {
        let w = weights.get(flag);
        exact += w;
        breakdown.insert(flag, w.to_f64().unwrap_or(0.0));
    }
    SuitabilityScore { value: exact.to_f64().unwrap_or(0.0).clamp(0.0, 1.0), breakdown }
}

/// `knowledge.json` inside a repository directory, guarded by the repository lock.
#[derive(Clone, Debug)]
pub struct KnowledgeStore {
    dir: PathBuf,
}

impl KnowledgeStore {
    pub fn new(repo_dir: impl Into<PathBuf>) -> KnowledgeStore {
        KnowledgeStore { dir: repo_dir.into() }
    }

    pub fn path(&self) -> PathBuf {
        self.dir.join(KNOWLEDGE_FILE)
    }

    /// Missing file reads as an empty catalog.
    pub fn load(&self) -> Result<KnowledgeCatalog, KnowledgeError> {
        let path = self.path();
        match fs::read_to_string(&path) {
            Ok(text) => KnowledgeCatalog::parse(&text),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(KnowledgeCatalog::default()),
            Err(source) => Err(KnowledgeError::Io { path, source }),
        }
    }

    /// Loads, applies `f` and saves atomically while holding the lock.
    pub fn update<T>(&self, f: impl FnOnce(&mut KnowledgeCatalog) -> Result<T, KnowledgeError>) -> Result<T, KnowledgeError> {
        let _guard = LockGuard::acquire(&self.dir)?;
        let mut catalog = self.load()?;
        let out = f(&mut catalog)?;
        let path = self.path();
        write_atomic(&path, catalog.to_canonical_string().as_bytes())
            .map_err(|source| KnowledgeError::Io { path, source })?;
        Ok(out)
    }
}
