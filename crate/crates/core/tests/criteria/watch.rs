use std::fs;
use std::path::Path;

use protoml_core::recorder::{Snapshot, Store, WatchEvent, Watcher};
use serde_json::Value;

use super::{common, Outcome};

/// The simple fixture as a fresh, never-executed notebook.
pub fn unexecuted() -> Value {
    let mut doc: Value = serde_json::from_slice(&fs::read(common::fixtures_dir().join("simple.ipynb")).unwrap()).unwrap();
    for cell in doc["cells"].as_array_mut().unwrap() {
        if cell["cell_type"] == "code" {
            cell["execution_count"] = Value::Null;
            cell["outputs"] = Value::Array(Vec::new());
        }
    }
    doc
}

/// What a notebook frontend writes after running one cell.
pub fn execute(doc: &mut Value, index: usize, count: u64) {
    let cell = &mut doc["cells"][index];
    cell["execution_count"] = count.into();
    cell["outputs"] = serde_json::json!([{"output_type": "stream", "name": "stdout", "text": [format!("run {count}\n")]}]);
}

pub fn write(path: &Path, doc: &Value) {
    fs::write(path, serde_json::to_string_pretty(doc).unwrap()).unwrap();
}

pub fn recorded(event: Option<WatchEvent>) -> Result<Option<Snapshot>, String> {
    match event {
        Some(WatchEvent::Recorded(s)) => Ok(Some(s)),
        None => Ok(None),
        Some(other) => Err(format!("unexpected event {other:?}")),
    }
}

/// Three executions, a no-op rewrite, a checkout of the root and one more
/// execution: four snapshots with one branch at the root.
pub fn scripted_scenario() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let repo = dir.path().join(".protoml");
    let nb_path = dir.path().join("work.ipynb");
    let mut doc = unexecuted();
    write(&nb_path, &doc);
    let mut watcher = Watcher::new(Store::open(&repo).unwrap(), &nb_path);

    // quiescence: the first observation is only a baseline
    for _ in 0..3 {
        ensure!(recorded(watcher.poll_once())?.is_none(), "recorded without execution");
    }

    let mut snaps = Vec::new();
    for (count, cell) in [(1, 1), (2, 2), (3, 3)] {
        execute(&mut doc, cell, count);
        write(&nb_path, &doc);
        let Some(snap) = recorded(watcher.poll_once())? else { return Err(format!("execution of cell {cell} missed")) };
        ensure_eq!(snap.trigger_cell_id.as_deref(), Some(format!("cell-{cell}").as_str()), "trigger");
        snaps.push(snap);
        ensure!(recorded(watcher.poll_once())?.is_none(), "second poll recorded again");
    }

    // no-op rewrite: same content, different formatting
    fs::write(&nb_path, serde_json::to_string(&doc).unwrap()).unwrap();
    ensure!(recorded(watcher.poll_once())?.is_none(), "reformatting recorded");

    // checkout of the root from a second handle, as the command line does, then edit and execute
    let root = snaps[0].clone();
    let mut other = Store::open(&repo).unwrap();
    let checked_out = other.checkout(&root.node_id).unwrap();
    fs::write(&nb_path, checked_out.to_ipynb()).unwrap();
    ensure!(recorded(watcher.poll_once())?.is_none(), "checking out is not an execution");

    let mut doc: Value = serde_json::from_str(&checked_out.to_ipynb()).unwrap();
    doc["cells"][2]["source"] = serde_json::json!(["df = pd.read_csv(\"data/train_v2.csv\")\n", "df.head()"]);
    write(&nb_path, &doc);
    ensure!(recorded(watcher.poll_once())?.is_none(), "text edit alone is not an execution");
    execute(&mut doc, 2, 2);
    write(&nb_path, &doc);
    let Some(branch) = recorded(watcher.poll_once())? else { return Err("execution after checkout missed".into()) };
    ensure_eq!(branch.parent_id.as_ref(), Some(&root.node_id), "branch parent");

    let tree = Store::open(&repo).unwrap().tree();
    ensure_eq!(tree.len(), 4, "snapshots");
    ensure_eq!(tree.branch_points().len(), 1, "branches");
    ensure_eq!(tree.children(&root.node_id).len(), 2, "children under root");
    tree.validate()?;
    Ok("4 snapshots, 1 branch".into())
}
