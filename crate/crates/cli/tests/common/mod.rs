#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use protoml_core::{parse_notebook, Cell, Notebook};

pub const NOW: &str = "2026-03-01T12:00:00Z";

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture(name: &str) -> PathBuf {
    fixtures_dir().join(format!("{name}.ipynb"))
}

pub fn fixture_names() -> Vec<String> {
    let mut names: Vec<String> = std::fs::read_dir(fixtures_dir())
        .unwrap()
        .filter_map(|e| {
            let p = e.unwrap().path();
            (p.extension()? == "ipynb").then(|| p.file_stem().unwrap().to_string_lossy().into_owned())
        })
        .collect();
    names.sort();
    names
}

/// Runs the binary with a pinned clock and repository, no inherited overrides.
pub fn protoml(repo: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_protoml"))
        .args(args)
        .env("PROTOML_NOW", NOW)
        .env("PROTOML_REPO", repo)
        .env_remove("PROTOML_DESCRIBE_CMD")
        .output()
        .expect("binary runs")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// Compares against the stored golden, or rewrites it when `UPDATE_GOLDENS=1`.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = golden_dir().join(name);
    if std::env::var_os("UPDATE_GOLDENS").is_some_and(|v| v == "1") {
        fs::create_dir_all(golden_dir()).unwrap();
        fs::write(&path, actual).unwrap();
        return Ok(());
    }
    let expected = fs::read_to_string(&path).map_err(|e| format!("{name}: missing golden ({e})"))?;
    if expected == actual {
        Ok(())
    } else {
        Err(format!("{name}: output differs from golden"))
    }
}

pub fn run_ok(repo: &Path, args: &[&str]) -> String {
    let out = protoml(repo, args);
    assert!(
        out.status.code() == Some(0) || (args[0] == "review" && out.status.code() == Some(1)),
        "{args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    stdout(&out)
}

pub fn write_variant(dir: &Path, name: &str, extra: &str) -> PathBuf {
    let base = parse_notebook(&fs::read(fixture("simple")).unwrap()).unwrap();
    let mut cells = base.cells.clone();
    cells.push(Cell::code("cell-extra", extra).with_execution_count(9));
    let nb = Notebook { cells, ..base };
    let path = dir.join(name);
    fs::write(&path, nb.to_ipynb()).unwrap();
    path
}

/// Root, then two sibling branches: the second is recorded after checking out root.
pub fn branch_scenario(repo: &Path, work: &Path) -> (String, String) {
    let root = fixture("simple");
    let a = write_variant(work, "a.ipynb", "print(pred.mean())");
    let b = write_variant(work, "b.ipynb", "print(model.coef_)");
    run_ok(repo, &["record", root.to_str().unwrap(), "--comment", "baseline"]);
    run_ok(repo, &["record", a.to_str().unwrap()]);
    let tree: serde_json::Value = serde_json::from_str(&run_ok(repo, &["log", "--format", "json"])).unwrap();
    let root_id = tree["root_id"].as_str().unwrap().to_string();
    run_ok(repo, &["checkout", &root_id[..12], "-o", work.join("restored.ipynb").to_str().unwrap()]);
    run_ok(repo, &["record", b.to_str().unwrap(), "--comment", "second idea"]);
    (run_ok(repo, &["log", "--tree"]), run_ok(repo, &["log", "--format", "json"]))
}
