use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::hash::ContentHash;

pub const TREE_SCHEMA: &str = "tree/1";

/// One recorded notebook version.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub node_id: ContentHash,
    pub parent_id: Option<ContentHash>,
    pub content_hash: ContentHash,
    pub trigger_cell_id: Option<String>,
    /// Stored outside the hashed identity.
    pub comment: Option<String>,
    /// RFC 3339, UTC.
    pub created_at: String,
    pub seq: u64,
}

/// `sha256(content_hash_hex ‖ parent_hex_or_empty ‖ decimal(seq))`.
pub fn node_id(content_hash: &ContentHash, parent: Option<&ContentHash>, seq: u64) -> ContentHash {
    let mut hasher = Sha256::new();
    hasher.update(content_hash.as_str().as_bytes());
    if let Some(p) = parent {
        hasher.update(p.as_str().as_bytes());
    }
    hasher.update(seq.to_string().as_bytes());
    ContentHash::parse(&hex::encode(hasher.finalize())).expect("sha256 hex is a valid hash")
}

/// Rooted tree of snapshots with a movable head. Empty until the first record.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExperimentTree {
    pub nodes: BTreeMap<ContentHash, Snapshot>,
    pub root_id: Option<ContentHash>,
    pub head_id: Option<ContentHash>,
}

impl ExperimentTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn head(&self) -> Option<&Snapshot> {
        self.head_id.as_ref().and_then(|h| self.nodes.get(h))
    }

    /// Children ordered by sequence number.
    pub fn children(&self, id: &ContentHash) -> Vec<&Snapshot> {
        let mut kids: Vec<&Snapshot> = self.nodes.values().filter(|s| s.parent_id.as_ref() == Some(id)).collect();
        kids.sort_by_key(|s| s.seq);
        kids
    }

    /// Nodes with more than one child.
    pub fn branch_points(&self) -> Vec<&Snapshot> {
        let mut points: Vec<&Snapshot> = self.nodes.values().filter(|s| self.children(&s.node_id).len() > 1).collect();
        points.sort_by_key(|s| s.seq);
        points
    }

    pub fn by_seq(&self) -> Vec<&Snapshot> {
        let mut all: Vec<&Snapshot> = self.nodes.values().collect();
        all.sort_by_key(|s| s.seq);
        all
    }

    /// Checks single root, parent existence, acyclicity, head membership and
    /// node-id derivation.
    pub fn validate(&self) -> Result<(), String> {
        if self.nodes.is_empty() {
            return match (&self.root_id, &self.head_id) {
                (None, None) => Ok(()),
                _ => Err("empty tree with root or head set".into()),
            };
        }
        let root = self.root_id.as_ref().ok_or("non-empty tree without root")?;
        let head = self.head_id.as_ref().ok_or("non-empty tree without head")?;
        if !self.nodes.contains_key(head) {
            return Err(format!("head {head} is not a node"));
        }
        let roots: Vec<_> = self.nodes.values().filter(|s| s.parent_id.is_none()).collect();
        if roots.len() != 1 || &roots[0].node_id != root {
            return Err(format!("expected exactly one root {root}, found {}", roots.len()));
        }
        let mut seqs = HashSet::new();
        for (key, snap) in &self.nodes {
            if key != &snap.node_id {
                return Err(format!("node stored under wrong key {key}"));
            }
            if node_id(&snap.content_hash, snap.parent_id.as_ref(), snap.seq) != snap.node_id {
                return Err(format!("node {} does not match its derived id", snap.node_id));
            }
            if !seqs.insert(snap.seq) {
                return Err(format!("duplicate sequence number {}", snap.seq));
            }
            if let Some(parent) = &snap.parent_id {
                let p = self.nodes.get(parent).ok_or_else(|| format!("node {} has missing parent {parent}", snap.node_id))?;
                if p.seq >= snap.seq {
                    return Err(format!("node {} is older than its parent", snap.node_id));
                }
            }
        }
        // Every parent is strictly older, so following parents always terminates at the root.
        Ok(())
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::json!({
            "schema": TREE_SCHEMA,
            "root_id": self.root_id,
            "head_id": self.head_id,
            "nodes": self.by_seq(),
        })
    }

    /// Indented text rendering, children in sequence order.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if let Some(root) = self.root_id.as_ref().and_then(|r| self.nodes.get(r)) {
            self.render_node(root, "", None, &mut out);
        }
        out
    }

    fn render_node(&self, snap: &Snapshot, prefix: &str, last: Option<bool>, out: &mut String) {
        let connector = match last {
            None => "",
            Some(true) => "└── ",
            Some(false) => "├── ",
        };
        let _ = write!(out, "{prefix}{connector}{}  #{}", snap.node_id.short(), snap.seq);
        if let Some(cell) = &snap.trigger_cell_id {
            let _ = write!(out, "  cell:{cell}");
        }
        if self.head_id.as_ref() == Some(&snap.node_id) {
            out.push_str("  (HEAD)");
        }
        if let Some(comment) = &snap.comment {
            let _ = write!(out, "  \"{}\"", comment.replace('\n', " "));
        }
        out.push('\n');
        let child_prefix = match last {
            None => prefix.to_string(),
            Some(true) => format!("{prefix}    "),
            Some(false) => format!("{prefix}│   "),
        };
        let kids = self.children(&snap.node_id);
        for (i, kid) in kids.iter().enumerate() {
            self.render_node(kid, &child_prefix, Some(i + 1 == kids.len()), out);
        }
    }
}
