use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use protoml_core::recorder::store::Clock;
use protoml_core::recorder::{ExperimentTree, Snapshot, Store};
use protoml_core::{canonical_hash, Cell, ContentHash, Notebook};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::Outcome;

pub fn fixed_clock() -> Clock {
    Arc::new(|| Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap())
}

pub fn variant(k: u32) -> Notebook {
    let mut cells = vec![Cell::code("load", format!("x = {}", k % 3))];
    if k % 2 == 0 {
        cells.push(Cell::markdown("note", "notes"));
    }
    cells.push(Cell::code("fit", format!("y = x * {k}")).with_execution_count(u64::from(k)));
    Notebook::new(cells)
}

/// Checks the structural invariants without going through `ExperimentTree::validate`.
pub fn check_invariants(tree: &ExperimentTree) -> Result<(), String> {
    let roots: Vec<&Snapshot> = tree.nodes.values().filter(|s| s.parent_id.is_none()).collect();
    ensure_eq!(roots.len(), 1, "single root");
    ensure!(Some(&roots[0].node_id) == tree.root_id.as_ref(), "root id points at the parentless node");
    ensure!(tree.head_id.as_ref().is_some_and(|h| tree.nodes.contains_key(h)), "head is a node");
    for snap in tree.nodes.values() {
        if let Some(p) = &snap.parent_id {
            ensure!(tree.nodes.contains_key(p), "parent {p} exists");
        }
        let mut seen = HashSet::new();
        let mut cur = snap;
        while let Some(p) = &cur.parent_id {
            ensure!(seen.insert(p.clone()), "cycle through {p}");
            cur = &tree.nodes[p];
        }
        ensure!(Some(&cur.node_id) == tree.root_id.as_ref(), "chain from {} ends at the root", snap.node_id);
    }
    tree.validate()
}

pub fn check_append_only(
    before: &BTreeMap<ContentHash, Snapshot>,
    after: &ExperimentTree,
    annotated: Option<&ContentHash>,
) -> Result<(), String> {
    ensure!(after.nodes.len() >= before.len(), "tree shrank");
    for (id, old) in before {
        let Some(new) = after.nodes.get(id) else { return Err(format!("node {id} vanished")) };
        let mut new_sans_comment = new.clone();
        if annotated == Some(id) {
            new_sans_comment.comment = old.comment.clone();
        }
        ensure_eq!(&new_sans_comment, old, "node {id} changed");
    }
    Ok(())
}

/// Random record/checkout/annotate sequences against a model of the store.
pub fn fuzz(sequences: usize) -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x7ee5);
    let mut total_ops = 0;
    for seq_no in 0..sequences {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path()).unwrap().with_clock(fixed_clock());
        let mut recorded: BTreeMap<ContentHash, Notebook> = BTreeMap::new();
        let mut comments: BTreeMap<ContentHash, String> = BTreeMap::new();
        let ops = rng.gen_range(1..10);
        for step in 0..ops {
            let ctx = format!("sequence {seq_no} step {step}");
            let before = store.tree().nodes;
            let choice = if store.is_empty() { 0 } else { rng.gen_range(0..3) };
            let mut annotated = None;
            match choice {
                0 => {
                    let nb = variant(rng.gen_range(0..6));
                    let head_before = store.head();
                    let head_children = head_before.as_ref().map(|h| store.tree().children(&h.node_id).len());
                    let snap = store.record(&nb, Some("fit"), None).map_err(|e| format!("{ctx}: {e}"))?;
                    let duplicate = head_before.as_ref().is_some_and(|h| h.content_hash == canonical_hash(&nb));
                    if duplicate {
                        ensure!(Some(&snap) == head_before.as_ref(), "{ctx}: duplicate record moved head");
                        ensure_eq!(store.len(), before.len(), "{ctx}: duplicate record added a node");
                    } else {
                        ensure_eq!(store.len(), before.len() + 1, "{ctx}: record adds one node");
                        ensure_eq!(snap.parent_id, head_before.as_ref().map(|h| h.node_id.clone()), "{ctx}: parent is old head");
                        if let (Some(h), Some(n)) = (&head_before, head_children) {
                            ensure_eq!(store.tree().children(&h.node_id).len(), n + 1, "{ctx}: old head gains a child");
                        }
                        recorded.insert(snap.node_id.clone(), nb);
                    }
                    ensure!(store.head().is_some_and(|h| h.node_id == snap.node_id), "{ctx}: head is the new node");
                }
                1 => {
                    let ids: Vec<ContentHash> = before.keys().cloned().collect();
                    let id = &ids[rng.gen_range(0..ids.len())];
                    let nb = store.checkout(id).map_err(|e| format!("{ctx}: {e}"))?;
                    ensure!(nb == recorded[id], "{ctx}: checkout returned other content");
                    ensure!(store.head().is_some_and(|h| &h.node_id == id), "{ctx}: head moved to checkout");
                }
                _ => {
                    let ids: Vec<ContentHash> = before.keys().cloned().collect();
                    let id = ids[rng.gen_range(0..ids.len())].clone();
                    let text = format!("note {seq_no}.{step}");
                    let snap = store.annotate(&id, &text).map_err(|e| format!("{ctx}: {e}"))?;
                    ensure_eq!(snap.node_id, id, "{ctx}: annotate keeps identity");
                    ensure_eq!(snap.comment.as_deref(), Some(text.as_str()), "{ctx}: comment stored");
                    comments.insert(id.clone(), text);
                    annotated = Some(id);
                }
            }
            let tree = store.tree();
            check_invariants(&tree).map_err(|e| format!("{ctx}: {e}"))?;
            check_append_only(&before, &tree, annotated.as_ref()).map_err(|e| format!("{ctx}: {e}"))?;
            total_ops += 1;
        }
        let reopened = Store::open(dir.path()).unwrap();
        ensure!(reopened.tree() == store.tree(), "sequence {seq_no}: persisted state differs");
        for (id, text) in &comments {
            ensure_eq!(reopened.snapshot(id).unwrap().comment.as_ref(), Some(text), "sequence {seq_no}: comment persisted");
        }
    }
    ensure!(total_ops >= sequences, "only {total_ops} operations");
    Ok(format!("{sequences} sequences, {total_ops} operations"))
}

/// Record three versions, check out the root, record again: root has two children.
pub fn branch_scenario() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut store = Store::open(dir.path()).unwrap();
    let root = store.record(&variant(0), None, None).unwrap();
    store.record(&variant(1), Some("fit"), None).unwrap();
    store.record(&variant(2), Some("fit"), None).unwrap();
    ensure!(store.checkout(&root.node_id).unwrap() == variant(0), "root checkout content");
    let branch = store.record(&variant(3), Some("fit"), None).unwrap();
    let tree = store.tree();
    ensure_eq!(tree.len(), 4, "node count");
    ensure_eq!(tree.children(&root.node_id).len(), 2, "children under root");
    ensure_eq!(tree.branch_points().len(), 1, "branch points");
    ensure_eq!(branch.parent_id.as_ref(), Some(&root.node_id), "branch parent");
    check_invariants(&tree)?;
    Ok("4 nodes, 2 children under root".into())
}
